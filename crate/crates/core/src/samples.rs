//! Programmatic sample meshes: structured unit-square fixtures with a
//! circular (or general radial) interface and an exterior collar, annular
//! polygon fixtures, and small randomized meshes for property tests.
//!
//! These builders exist so tests, examples and demos have reproducible
//! geometry without an external mesh generator. The square fixtures are
//! built in three steps: structured grid with centroid labeling, radial
//! projection of the staircase interface onto the target curve, then a few
//! Laplacian smoothing sweeps of the movable interior vertices.

use rand::Rng;

use crate::geometry::Vec2;
use crate::mesh::{Label, LabeledMesh};

/// Raw structured grid over `[origin.x, origin.x + nx·h] × [origin.y,
/// origin.y + ny·h]`, two triangles per cell with alternating diagonals.
pub fn rect_raw(origin: Vec2, nx: usize, ny: usize, h: f64) -> (Vec<Vec2>, Vec<[usize; 3]>) {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(origin + Vec2::new(i as f64 * h, j as f64 * h));
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    (vertices, triangles)
}

/// Structured rectangle mesh labeled by a centroid classifier.
pub fn rect_mesh(
    origin: Vec2,
    nx: usize,
    ny: usize,
    h: f64,
    classify: impl Fn(Vec2) -> Label,
) -> LabeledMesh {
    let (vertices, triangles) = rect_raw(origin, nx, ny, h);
    let labels = triangles
        .iter()
        .map(|t| classify((vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0))
        .collect();
    LabeledMesh::new(vertices, triangles, labels).expect("structured mesh is valid")
}

/// Unit-square domain with an interface given in polar form around
/// `center`: triangles with centroid radius below `radial(θ)` are NONLOCAL,
/// the rest of the square is LOCAL, and `exterior_layers` rings of cells
/// (width `exterior_layers / n`) around the square are EXTERIOR. Interface
/// vertices are projected onto the curve and the remaining interior
/// vertices are relaxed by Laplacian smoothing.
///
/// The curve must stay well inside the unit square (a couple of cells away
/// from ∂Ω) and be resolved by the grid: `radial` should vary slowly on the
/// scale of `1/n`.
pub fn square_with_radial_interface(
    n: usize,
    exterior_layers: usize,
    center: Vec2,
    radial: impl Fn(f64) -> f64,
) -> LabeledMesh {
    let h = 1.0 / n as f64;
    let e = exterior_layers;
    let origin = Vec2::new(-(e as f64) * h, -(e as f64) * h);
    let total = n + 2 * e;
    let (mut vertices, triangles) = rect_raw(origin, total, total, h);
    let mut labels: Vec<Label> = triangles
        .iter()
        .map(|t| {
            let c = (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
            if c.x < 0.0 || c.x > 1.0 || c.y < 0.0 || c.y > 1.0 {
                Label::Exterior
            } else {
                let d = c - center;
                if d.norm() < radial(d.y.atan2(d.x)) {
                    Label::Nonlocal
                } else {
                    Label::Local
                }
            }
        })
        .collect();
    relax_interface_labels(&triangles, &mut labels);

    // Vertex classes from a first validated build.
    let staircase = LabeledMesh::new(vertices.clone(), triangles.clone(), labels.clone())
        .expect("staircase mesh is valid");

    // Move the staircase interface loop onto the curve. A plain radial
    // projection maps staircase corner pairs onto nearly coincident curve
    // points and produces slivers, so the loop vertices are respaced
    // uniformly in angle (cyclic order preserved, global rotation chosen to
    // minimize movement) before evaluating the curve.
    let gamma = staircase
        .derive_interface()
        .expect("fixture interface is closed");
    for chain in &gamma.loops {
        let n_loop = chain.len();
        let thetas: Vec<f64> = chain
            .iter()
            .map(|&v| {
                let d = vertices[v] - center;
                d.y.atan2(d.x)
            })
            .collect();
        // loop orientation: sum of wrapped angle increments is ±2π
        let wrap = |a: f64| {
            let mut a = a % std::f64::consts::TAU;
            if a > std::f64::consts::PI {
                a -= std::f64::consts::TAU;
            }
            if a < -std::f64::consts::PI {
                a += std::f64::consts::TAU;
            }
            a
        };
        let turn: f64 = (0..n_loop)
            .map(|k| wrap(thetas[(k + 1) % n_loop] - thetas[k]))
            .sum();
        let step = turn.signum() * std::f64::consts::TAU / n_loop as f64;
        // circular mean of the per-vertex offsets from the uniform grid
        let (mut s_sin, mut s_cos) = (0.0, 0.0);
        for (k, &theta) in thetas.iter().enumerate() {
            let b = theta - step * k as f64;
            s_sin += b.sin();
            s_cos += b.cos();
        }
        let base = s_sin.atan2(s_cos);
        for (k, &v) in chain.iter().enumerate() {
            let theta = base + step * k as f64;
            vertices[v] =
                center + radial(theta) * Vec2::new(theta.cos(), theta.sin());
        }
    }

    // Laplacian smoothing of movable vertices (interior to Ω, off Γ).
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    for t in &triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    }
    for nbrs in &mut neighbors {
        nbrs.sort_unstable();
        nbrs.dedup();
    }
    let movable: Vec<bool> = (0..vertices.len())
        .map(|v| {
            let info = staircase.vertex_info(v);
            !info.pinned() && !info.on_interface()
        })
        .collect();
    for _ in 0..30 {
        let snapshot = vertices.clone();
        for v in 0..vertices.len() {
            if !movable[v] || neighbors[v].is_empty() {
                continue;
            }
            let avg = neighbors[v]
                .iter()
                .fold(Vec2::zeros(), |acc, &w| acc + snapshot[w])
                / neighbors[v].len() as f64;
            let p = vertices[v];
            vertices[v] = p + 0.6 * (avg - p);
        }
    }

    LabeledMesh::new(vertices, triangles, labels).expect("projected mesh is valid")
}

/// Flips LOCAL/NONLOCAL labels of staircase "cap" triangles — triangles
/// with two interface edges or all three vertices on the interface — until
/// none remain. Such caps turn into slivers when their vertices are
/// projected onto the target curve, so they are absorbed into the other
/// side first. Flips are applied one at a time with fresh adjacency to
/// avoid oscillation.
fn relax_interface_labels(triangles: &[[usize; 3]], labels: &mut [Label]) {
    let mut budget = triangles.len();
    'outer: while budget > 0 {
        // interface edges from the current labels
        let mut edge_tris: std::collections::HashMap<(usize, usize), Vec<usize>> =
            std::collections::HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut n_if_edges = vec![0usize; triangles.len()];
        let mut if_vertex = vec![false; triangles.iter().flatten().max().map_or(0, |&m| m + 1)];
        for (&(a, b), tris) in &edge_tris {
            if tris.len() == 2 {
                let l = (labels[tris[0]], labels[tris[1]]);
                if matches!(
                    l,
                    (Label::Local, Label::Nonlocal) | (Label::Nonlocal, Label::Local)
                ) {
                    n_if_edges[tris[0]] += 1;
                    n_if_edges[tris[1]] += 1;
                    if_vertex[a] = true;
                    if_vertex[b] = true;
                }
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            let flip = match labels[t] {
                Label::Exterior => false,
                _ => {
                    n_if_edges[t] >= 2 || tri.iter().all(|&v| if_vertex[v])
                }
            };
            if flip {
                labels[t] = match labels[t] {
                    Label::Local => Label::Nonlocal,
                    Label::Nonlocal => Label::Local,
                    Label::Exterior => unreachable!(),
                };
                budget -= 1;
                continue 'outer;
            }
        }
        break;
    }
}

/// Unit-square domain with a circular interface of the given center and
/// radius; see [`square_with_radial_interface`].
pub fn square_with_circle(
    n: usize,
    exterior_layers: usize,
    center: Vec2,
    radius: f64,
) -> LabeledMesh {
    square_with_radial_interface(n, exterior_layers, center, |_| radius)
}

/// Annulus around a regular `segments`-gon interface of the given `radius`:
/// one band of NONLOCAL triangles inside the polygon ring, one LOCAL band
/// outside, one EXTERIOR band beyond that, each of radial width `band`.
/// The interface Γ is exactly the inscribed polygon.
pub fn polygon_annulus(center: Vec2, radius: f64, segments: usize, band: f64) -> LabeledMesh {
    assert!(segments >= 3 && band > 0.0 && radius > band);
    let m = segments;
    let ring_radii = [radius - band, radius, radius + band, radius + 2.0 * band];
    let mut vertices = Vec::with_capacity(4 * m);
    for r in ring_radii {
        for j in 0..m {
            let theta = std::f64::consts::TAU * j as f64 / m as f64;
            vertices.push(center + r * Vec2::new(theta.cos(), theta.sin()));
        }
    }
    let idx = |ring: usize, j: usize| ring * m + (j % m);
    let mut triangles = Vec::with_capacity(6 * m);
    let mut labels = Vec::with_capacity(6 * m);
    let band_labels = [Label::Nonlocal, Label::Local, Label::Exterior];
    for ring in 0..3 {
        for j in 0..m {
            triangles.push([idx(ring, j), idx(ring + 1, j), idx(ring + 1, j + 1)]);
            triangles.push([idx(ring, j), idx(ring + 1, j + 1), idx(ring, j + 1)]);
            labels.push(band_labels[ring]);
            labels.push(band_labels[ring]);
        }
    }
    LabeledMesh::new(vertices, triangles, labels).expect("annulus mesh is valid")
}

/// Small jittered-grid mesh with random labels for property and oracle
/// tests: between 2×2 and `max_dim`×`max_dim` cells, interior vertices
/// perturbed by up to 0.15 h, every triangle labeled independently with at
/// least one NONLOCAL triangle guaranteed.
pub fn random_labeled_mesh(rng: &mut impl Rng, max_dim: usize) -> LabeledMesh {
    let nx = rng.gen_range(2..=max_dim);
    let ny = rng.gen_range(2..=max_dim);
    let h = 1.0 / nx.max(ny) as f64;
    let (mut vertices, triangles) = rect_raw(Vec2::zeros(), nx, ny, h);
    for j in 1..ny {
        for i in 1..nx {
            let v = j * (nx + 1) + i;
            vertices[v] += 0.15
                * h
                * Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let mut labels: Vec<Label> = (0..triangles.len())
        .map(|_| match rng.gen_range(0..3) {
            0 => Label::Local,
            1 => Label::Nonlocal,
            _ => Label::Exterior,
        })
        .collect();
    if !labels.contains(&Label::Nonlocal) {
        let t = rng.gen_range(0..labels.len());
        labels[t] = Label::Nonlocal;
    }
    LabeledMesh::new(vertices, triangles, labels).expect("jittered grid is valid")
}

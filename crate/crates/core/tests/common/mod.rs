//! Shared helpers for the integration suite, most importantly a dense,
//! index-free double-quadrature oracle for the nonlocal blocks.
//!
//! The oracle is deliberately primitive: it loops over *all* ordered
//! triangle pairs (no spatial index, no distance culling, no restriction
//! during scatter, no parallel chunking), accumulates dense matrices over
//! nodal (vertex) indices straight from the bilinear-form definitions, and
//! restricts to free DOFs only at the very end. Agreement with the
//! production assembly therefore checks the spatial index, the pair
//! bookkeeping, the scatter/restriction logic, and the deterministic merge
//! all at once. Quadrature convention is shared by definition (the discrete
//! forms are *defined* through the truncation-by-indicator tensor rule), so
//! the same `TriangleRule` degree must be passed to both sides.

#![allow(dead_code)]

use ltnshape::dofs::DofMap;
use ltnshape::geometry::Vec2;
use ltnshape::kernels::Kernel;
use ltnshape::mesh::{Label, LabeledMesh};
use ltnshape::quad::TriangleRule;
use nalgebra::DMatrix;

/// Quadrature data of one physical triangle: point positions, weights
/// scaled by the triangle area, and P1 basis values (barycentric
/// coordinates) at each point.
pub struct TriPoints {
    pub x: Vec<Vec2>,
    pub w: Vec<f64>,
    pub bary: Vec<[f64; 3]>,
}

pub fn tri_points(mesh: &LabeledMesh, t: usize, rule: &TriangleRule) -> TriPoints {
    let [a, b, c] = mesh.triangle(t);
    let (pa, pb, pc) = (mesh.vertex(a), mesh.vertex(b), mesh.vertex(c));
    let area = mesh.area(t);
    let mut out = TriPoints {
        x: Vec::with_capacity(rule.points.len()),
        w: Vec::with_capacity(rule.points.len()),
        bary: Vec::with_capacity(rule.points.len()),
    };
    for &(l, w) in &rule.points {
        out.x.push(l[0] * pa + l[1] * pb + l[2] * pc);
        out.w.push(w * area);
        out.bary.push(l);
    }
    out
}

/// Dense nodal-index matrices of every nonlocal block. Row/column index =
/// vertex id; the side a vertex acts on is implied by the block (difference
/// and the x-side masses live on the nonlocal side, `c_nl_l` columns and
/// `m_cross_l` on the local side).
pub struct DenseBlocks {
    pub difference: DMatrix<f64>,
    pub c_nl_l: DMatrix<f64>,
    pub m_cross_nl: DMatrix<f64>,
    pub m_cross_l: DMatrix<f64>,
    pub absorption: DMatrix<f64>,
}

pub fn dense_nonlocal_oracle(
    mesh: &LabeledMesh,
    kernel: &dyn Kernel,
    rule_x: &TriangleRule,
    rule_y: &TriangleRule,
) -> DenseBlocks {
    let n = mesh.n_vertices();
    let mut difference = DMatrix::zeros(n, n);
    let mut c_nl_l = DMatrix::zeros(n, n);
    let mut m_cross_nl = DMatrix::zeros(n, n);
    let mut m_cross_l = DMatrix::zeros(n, n);
    let mut absorption = DMatrix::zeros(n, n);

    for a in 0..mesh.n_triangles() {
        if mesh.label(a) != Label::Nonlocal {
            continue;
        }
        let pa = tri_points(mesh, a, rule_x);
        let va = mesh.triangle(a);
        for b in 0..mesh.n_triangles() {
            let pb = tri_points(mesh, b, rule_y);
            let vb = mesh.triangle(b);
            match mesh.label(b) {
                // ∫_{Ω_nl}∫_{Ω_nl} (u(x)−u(y))(v(x)−v(y)) γ dy dx: expand
                // with the signed 6-vector of basis values at (x, y).
                Label::Nonlocal => {
                    for (qx, &x) in pa.x.iter().enumerate() {
                        for (qy, &y) in pb.x.iter().enumerate() {
                            let g = kernel.value(x, y);
                            if g == 0.0 {
                                continue;
                            }
                            let w = pa.w[qx] * pb.w[qy] * g;
                            let s = [
                                (va[0], pa.bary[qx][0]),
                                (va[1], pa.bary[qx][1]),
                                (va[2], pa.bary[qx][2]),
                                (vb[0], -pb.bary[qy][0]),
                                (vb[1], -pb.bary[qy][1]),
                                (vb[2], -pb.bary[qy][2]),
                            ];
                            for &(i, si) in &s {
                                for &(j, sj) in &s {
                                    difference[(i, j)] += w * si * sj;
                                }
                            }
                        }
                    }
                }
                // ∫_{Ω_nl}∫_{Ω_l} (u_nl(x)−u_l(y))(v_nl(x)−v_l(y)) γ dy dx,
                // expanded into its mass and coupling sub-blocks.
                Label::Local => {
                    for (qx, &x) in pa.x.iter().enumerate() {
                        for (qy, &y) in pb.x.iter().enumerate() {
                            let g = kernel.value(x, y);
                            if g == 0.0 {
                                continue;
                            }
                            let w = pa.w[qx] * pb.w[qy] * g;
                            for i in 0..3 {
                                for j in 0..3 {
                                    m_cross_nl[(va[i], va[j])] +=
                                        w * pa.bary[qx][i] * pa.bary[qx][j];
                                    c_nl_l[(va[i], vb[j])] +=
                                        w * pa.bary[qx][i] * pb.bary[qy][j];
                                    m_cross_l[(vb[i], vb[j])] +=
                                        w * pb.bary[qy][i] * pb.bary[qy][j];
                                }
                            }
                        }
                    }
                }
                // ∫_{Ω_nl} u(x) v(x) ∫_I γ(x, y) dy dx.
                Label::Exterior => {
                    for (qx, &x) in pa.x.iter().enumerate() {
                        for (qy, &y) in pb.x.iter().enumerate() {
                            let g = kernel.value(x, y);
                            if g == 0.0 {
                                continue;
                            }
                            let w = pa.w[qx] * pb.w[qy] * g;
                            for i in 0..3 {
                                for j in 0..3 {
                                    absorption[(va[i], va[j])] +=
                                        w * pa.bary[qx][i] * pa.bary[qx][j];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    DenseBlocks {
        difference,
        c_nl_l,
        m_cross_nl,
        m_cross_l,
        absorption,
    }
}

/// Restricts a dense nodal matrix to free DOFs, mapping row vertices
/// through `row_side` and column vertices through `col_side` of the DofMap
/// (`true` = nonlocal side, `false` = local side).
pub fn restrict_to_free(
    nodal: &DMatrix<f64>,
    map: &DofMap,
    row_nonlocal: bool,
    col_nonlocal: bool,
) -> DMatrix<f64> {
    let n_vert = nodal.nrows();
    let nf = map.n_free();
    let mut out = DMatrix::zeros(nf, nf);
    let status = |nonlocal: bool, v: usize| {
        if nonlocal {
            map.nonlocal_status(v)
        } else {
            map.local_status(v)
        }
    };
    for vr in 0..n_vert {
        let Some(fr) = status(row_nonlocal, vr).free_index() else {
            continue;
        };
        for vc in 0..n_vert {
            let Some(fc) = status(col_nonlocal, vc).free_index() else {
                continue;
            };
            out[(fr, fc)] = nodal[(vr, vc)];
        }
    }
    out
}

/// Largest absolute entry of a dense matrix (for relative comparisons).
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Asserts entrywise agreement within `tol` relative to the larger matrix's
/// largest entry.
pub fn assert_dense_close(label: &str, got: &DMatrix<f64>, want: &DMatrix<f64>, tol: f64) {
    assert_eq!(got.nrows(), want.nrows(), "{label}: row count");
    assert_eq!(got.ncols(), want.ncols(), "{label}: column count");
    let scale = max_abs(want).max(max_abs(got)).max(1e-300);
    let mut worst = 0.0_f64;
    let mut at = (0usize, 0usize);
    for r in 0..got.nrows() {
        for c in 0..got.ncols() {
            let d = (got[(r, c)] - want[(r, c)]).abs();
            if d > worst {
                worst = d;
                at = (r, c);
            }
        }
    }
    assert!(
        worst <= tol * scale,
        "{label}: worst mismatch {worst:.3e} at {at:?} exceeds {tol:.1e} x scale {scale:.3e}"
    );
}

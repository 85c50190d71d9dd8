//! Labeled conforming triangle meshes and the geometric operations the
//! solver and optimizer need: interface extraction, horizon-based
//! interaction pairs, mesh deformation with validity checks, nodal
//! interpolation between meshes and quality measures.
//!
//! A mesh carries one [`Label`] per triangle. `LOCAL` and `NONLOCAL`
//! triangles tile the computational domain Ω, separated by the interface Γ
//! (the closed polyline of edges where the two labels meet); `EXTERIOR`
//! triangles tile the surrounding interaction collar where the nonlocal
//! solution is pinned to zero.

use std::collections::HashMap;

use thiserror::Error;

use crate::geometry::{
    point_in_triangle, point_segment_distance, signed_area, triangle_triangle_distance, Vec2,
};

/// Subdomain label of one triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Label {
    /// Classical (PDE) subdomain Ω_l.
    Local,
    /// Nonlocal subdomain Ω_nl.
    Nonlocal,
    /// Interaction collar I outside Ω; fields are constrained to 0 here.
    Exterior,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Local => write!(f, "LOCAL"),
            Label::Nonlocal => write!(f, "NONLOCAL"),
            Label::Exterior => write!(f, "EXTERIOR"),
        }
    }
}

/// Errors from mesh construction and the geometric operations.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("vertex/triangle/label array sizes are inconsistent")]
    SizeMismatch,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("triangle {tri} references vertex {vertex} out of range {nverts}")]
    VertexOutOfRange { tri: usize, vertex: usize, nverts: usize },
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonfiniteCoordinate { vertex: usize },
    #[error("triangle {tri} is degenerate (zero signed area)")]
    DegenerateTriangle { tri: usize },
    #[error("mesh is nonconforming: {0}")]
    Nonconforming(String),
    #[error("no LOCAL/NONLOCAL adjacency: the mesh has no interface")]
    EmptyInterface,
    #[error("interface is not a closed 1-manifold at vertex {vertex} ({incident} incident interface edges)")]
    InterfaceNotClosed { vertex: usize, incident: usize },
    #[error("displacement moves constrained vertex {vertex} (on ∂Ω or in the exterior)")]
    ConstrainedVertexMoved { vertex: usize },
    #[error("deformation rejected: {0}")]
    InvalidDeformation(InvalidityReport),
    #[error("point ({x}, {y}) is {dist} away from the source mesh (limit {max_dist})")]
    OutOfDomain { x: f64, y: f64, dist: f64, max_dist: f64 },
}

/// Why a proposed deformation was rejected: triangles whose signed area
/// dropped below the floor (with the area ratio reached) and interior
/// vertices that crossed the fixed outer boundary ∂Ω.
#[derive(Debug, Clone, Default)]
pub struct InvalidityReport {
    pub collapsed_triangles: Vec<(usize, f64)>,
    pub escaped_vertices: Vec<usize>,
}

impl std::fmt::Display for InvalidityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} triangle(s) below the area floor, {} vertex(es) crossed ∂Ω",
            self.collapsed_triangles.len(),
            self.escaped_vertices.len()
        )
    }
}

/// Per-vertex incidence flags derived once at construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VertexInfo(u8);

impl VertexInfo {
    const LOCAL_SIDE: u8 = 1;
    const NONLOCAL_SIDE: u8 = 2;
    const EXTERIOR_SIDE: u8 = 4;
    const ON_OUTER_BOUNDARY: u8 = 8;
    const ON_INTERFACE: u8 = 16;
    const ON_MESH_BOUNDARY: u8 = 32;

    /// Incident to at least one LOCAL triangle.
    pub fn local_side(self) -> bool {
        self.0 & Self::LOCAL_SIDE != 0
    }
    /// Incident to at least one NONLOCAL triangle.
    pub fn nonlocal_side(self) -> bool {
        self.0 & Self::NONLOCAL_SIDE != 0
    }
    /// Incident to at least one EXTERIOR triangle.
    pub fn exterior_side(self) -> bool {
        self.0 & Self::EXTERIOR_SIDE != 0
    }
    /// Lies on ∂Ω, the boundary of the LOCAL ∪ NONLOCAL region.
    pub fn on_outer_boundary(self) -> bool {
        self.0 & Self::ON_OUTER_BOUNDARY != 0
    }
    /// Lies on the interface Γ.
    pub fn on_interface(self) -> bool {
        self.0 & Self::ON_INTERFACE != 0
    }
    /// Lies on the boundary of the whole triangulation (exterior included).
    pub fn on_mesh_boundary(self) -> bool {
        self.0 & Self::ON_MESH_BOUNDARY != 0
    }
    /// Pinned under mesh deformation: on ∂Ω or anywhere in the exterior.
    pub fn pinned(self) -> bool {
        self.on_outer_boundary() || self.exterior_side()
    }
}

/// One edge of the interface Γ with its two adjacent triangles and the unit
/// normal pointing from the nonlocal into the local subdomain.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceEdge {
    pub a: usize,
    pub b: usize,
    pub local_tri: usize,
    pub nonlocal_tri: usize,
    /// Unit normal with n · (centroid_local − centroid_nonlocal) > 0.
    pub normal: Vec2,
}

/// The interface Γ as an edge list plus its decomposition into closed
/// vertex loops.
#[derive(Debug, Clone)]
pub struct InterfaceCurve {
    pub edges: Vec<InterfaceEdge>,
    /// Closed loops as vertex index cycles (last connects back to first).
    pub loops: Vec<Vec<usize>>,
}

impl InterfaceCurve {
    /// Total polyline length of all loops.
    pub fn total_length(&self, mesh: &LabeledMesh) -> f64 {
        self.edges
            .iter()
            .map(|e| (mesh.vertex(e.b) - mesh.vertex(e.a)).norm())
            .sum()
    }

    /// Mean interface edge length.
    pub fn mean_edge_length(&self, mesh: &LabeledMesh) -> f64 {
        self.total_length(mesh) / self.edges.len() as f64
    }

    /// Sorted, de-duplicated interface vertex indices.
    pub fn vertex_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.edges.iter().flat_map(|e| [e.a, e.b]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Quality measures of a mesh: the minimum interior angle over all triangles
/// (degrees) and the ratio of the smallest to the largest triangle area
/// (1 for a uniform mesh, → 0 as an element collapses).
#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    pub min_angle_deg: f64,
    pub min_area_ratio: f64,
}

/// A validated, CCW-oriented, conforming labeled triangle mesh.
#[derive(Debug, Clone)]
pub struct LabeledMesh {
    vertices: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    labels: Vec<Label>,
    vertex_info: Vec<VertexInfo>,
    /// Edges of ∂Ω (boundary of LOCAL ∪ NONLOCAL), as vertex index pairs.
    outer_boundary_edges: Vec<(usize, usize)>,
}

impl LabeledMesh {
    /// Builds a mesh from raw arrays, validating and normalizing:
    /// clockwise triangles are reoriented, degenerate triangles and
    /// nonconforming connectivity (edges shared by more than two triangles,
    /// duplicated triangles, hanging nodes) are rejected.
    pub fn new(
        vertices: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        labels: Vec<Label>,
    ) -> Result<Self, MeshError> {
        if triangles.len() != labels.len() {
            return Err(MeshError::SizeMismatch);
        }
        if triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(MeshError::NonfiniteCoordinate { vertex: i });
            }
        }
        for (t, tri) in triangles.iter_mut().enumerate() {
            for &v in tri.iter() {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        tri: t,
                        vertex: v,
                        nverts: vertices.len(),
                    });
                }
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if area < 0.0 {
                tri.swap(1, 2);
            } else if area == 0.0 {
                return Err(MeshError::DegenerateTriangle { tri: t });
            }
        }

        // Edge incidence: key is the sorted vertex pair.
        let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(&other) = seen.get(&key) {
                return Err(MeshError::Nonconforming(format!(
                    "triangles {other} and {t} cover the same vertices"
                )));
            }
            seen.insert(key, t);
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let list = edge_tris.entry(key).or_default();
                if list.len() == 2 {
                    return Err(MeshError::Nonconforming(format!(
                        "edge ({a}, {b}) is shared by more than two triangles"
                    )));
                }
                list.push(t);
            }
        }

        // Hanging nodes: a mesh-graph boundary vertex lying in the interior
        // of a mesh-graph boundary edge.
        let boundary_edges: Vec<(usize, usize)> = edge_tris
            .iter()
            .filter(|(_, l)| l.len() == 1)
            .map(|(&e, _)| e)
            .collect();
        let mut boundary_vertices: Vec<usize> =
            boundary_edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        boundary_vertices.sort_unstable();
        boundary_vertices.dedup();
        for &(a, b) in &boundary_edges {
            let (pa, pb) = (vertices[a], vertices[b]);
            let len = (pb - pa).norm();
            for &m in &boundary_vertices {
                if m == a || m == b {
                    continue;
                }
                let pm = vertices[m];
                if (pm - pa).norm() > 1e-12 * len
                    && (pm - pb).norm() > 1e-12 * len
                    && point_segment_distance(pm, pa, pb) < 1e-12 * len
                {
                    return Err(MeshError::Nonconforming(format!(
                        "vertex {m} hangs on edge ({a}, {b})"
                    )));
                }
            }
        }

        // Vertex flags and the ∂Ω edge list.
        let mut vertex_info = vec![VertexInfo::default(); vertices.len()];
        for (t, tri) in triangles.iter().enumerate() {
            let bit = match labels[t] {
                Label::Local => VertexInfo::LOCAL_SIDE,
                Label::Nonlocal => VertexInfo::NONLOCAL_SIDE,
                Label::Exterior => VertexInfo::EXTERIOR_SIDE,
            };
            for &v in tri {
                vertex_info[v].0 |= bit;
            }
        }
        let mut outer_boundary_edges = Vec::new();
        for (&(a, b), tris) in &edge_tris {
            let n_omega = tris
                .iter()
                .filter(|&&t| labels[t] != Label::Exterior)
                .count();
            let n_local = tris.iter().filter(|&&t| labels[t] == Label::Local).count();
            let n_nonlocal = tris
                .iter()
                .filter(|&&t| labels[t] == Label::Nonlocal)
                .count();
            if n_omega == 1 {
                outer_boundary_edges.push((a, b));
                vertex_info[a].0 |= VertexInfo::ON_OUTER_BOUNDARY;
                vertex_info[b].0 |= VertexInfo::ON_OUTER_BOUNDARY;
            }
            if n_local == 1 && n_nonlocal == 1 {
                vertex_info[a].0 |= VertexInfo::ON_INTERFACE;
                vertex_info[b].0 |= VertexInfo::ON_INTERFACE;
            }
            if tris.len() == 1 {
                vertex_info[a].0 |= VertexInfo::ON_MESH_BOUNDARY;
                vertex_info[b].0 |= VertexInfo::ON_MESH_BOUNDARY;
            }
        }
        outer_boundary_edges.sort_unstable();

        Ok(LabeledMesh {
            vertices,
            triangles,
            labels,
            vertex_info,
            outer_boundary_edges,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> Vec2 {
        self.vertices[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, t: usize) -> Label {
        self.labels[t]
    }

    pub fn vertex_info(&self, v: usize) -> VertexInfo {
        self.vertex_info[v]
    }

    /// Edges of ∂Ω as vertex index pairs (unordered within each pair).
    pub fn outer_boundary_edges(&self) -> &[(usize, usize)] {
        &self.outer_boundary_edges
    }

    /// Corner coordinates of triangle `t`.
    pub fn triangle_coords(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Area of triangle `t` (positive; triangles are CCW).
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangle_coords(t);
        (a + b + c) / 3.0
    }

    /// Indices of triangles with the given label, in index order.
    pub fn triangles_with_label(&self, label: Label) -> Vec<usize> {
        (0..self.triangles.len())
            .filter(|&t| self.labels[t] == label)
            .collect()
    }

    /// Shortest edge length over all triangles.
    pub fn min_edge_length(&self) -> f64 {
        let mut h = f64::INFINITY;
        for tri in &self.triangles {
            for k in 0..3 {
                let e = (self.vertices[tri[(k + 1) % 3]] - self.vertices[tri[k]]).norm();
                h = h.min(e);
            }
        }
        h
    }

    /// Extracts Γ: all edges where a LOCAL and a NONLOCAL triangle meet,
    /// chained into closed loops. Errors with [`MeshError::EmptyInterface`]
    /// when no such edge exists and [`MeshError::InterfaceNotClosed`] when
    /// the edge set is not a disjoint union of closed polylines.
    pub fn derive_interface(&self) -> Result<InterfaceCurve, MeshError> {
        let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut edges = Vec::new();
        for (&(a, b), tris) in &edge_tris {
            if tris.len() != 2 {
                continue;
            }
            let (t0, t1) = (tris[0], tris[1]);
            let pair = (self.labels[t0], self.labels[t1]);
            let (local_tri, nonlocal_tri) = match pair {
                (Label::Local, Label::Nonlocal) => (t0, t1),
                (Label::Nonlocal, Label::Local) => (t1, t0),
                _ => continue,
            };
            let tangent = self.vertices[b] - self.vertices[a];
            let mut normal = Vec2::new(tangent.y, -tangent.x).normalize();
            if normal.dot(&(self.centroid(local_tri) - self.centroid(nonlocal_tri))) < 0.0 {
                normal = -normal;
            }
            edges.push(InterfaceEdge {
                a,
                b,
                local_tri,
                nonlocal_tri,
                normal,
            });
        }
        if edges.is_empty() {
            return Err(MeshError::EmptyInterface);
        }
        edges.sort_by_key(|e| (e.a, e.b));

        // Chain into loops: every interface vertex must have exactly two
        // incident interface edges.
        let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            incident.entry(e.a).or_default().push(i);
            incident.entry(e.b).or_default().push(i);
        }
        for (&v, list) in &incident {
            if list.len() != 2 {
                return Err(MeshError::InterfaceNotClosed {
                    vertex: v,
                    incident: list.len(),
                });
            }
        }
        let mut used = vec![false; edges.len()];
        let mut loops = Vec::new();
        for start in 0..edges.len() {
            if used[start] {
                continue;
            }
            let mut cycle = vec![edges[start].a, edges[start].b];
            used[start] = true;
            loop {
                let tail = *cycle.last().unwrap();
                let next = incident[&tail].iter().copied().find(|&i| !used[i]);
                match next {
                    Some(i) => {
                        used[i] = true;
                        let e = &edges[i];
                        let nxt = if e.a == tail { e.b } else { e.a };
                        if nxt == cycle[0] {
                            break;
                        }
                        cycle.push(nxt);
                    }
                    // Unreachable given the degree-2 check, but guard anyway.
                    None => {
                        return Err(MeshError::InterfaceNotClosed {
                            vertex: tail,
                            incident: 1,
                        })
                    }
                }
            }
            loops.push(cycle);
        }
        Ok(InterfaceCurve { edges, loops })
    }

    /// All (nonlocal, any) triangle pairs with Euclidean distance < `delta`,
    /// self-pairs included, sorted by (first, second). Candidates come from
    /// `index` (a superset by construction); an exact triangle-triangle
    /// distance test filters them.
    pub fn interaction_pairs(&self, index: &SpatialIndex, delta: f64) -> Vec<(usize, usize)> {
        use rayon::prelude::*;
        let nonlocal = self.triangles_with_label(Label::Nonlocal);
        let mut pairs: Vec<(usize, usize)> = nonlocal
            .par_iter()
            .flat_map_iter(|&a| {
                let ca = self.triangle_coords(a);
                let mut local_pairs = Vec::new();
                for b in index.query_triangle(self, a, delta) {
                    let cb = self.triangle_coords(b);
                    if triangle_triangle_distance(&ca, &cb) < delta {
                        local_pairs.push((a, b));
                    }
                }
                local_pairs.into_iter()
            })
            .collect();
        pairs.par_sort_unstable();
        pairs
    }

    /// Applies `vertices + alpha * displacement`, keeping connectivity and
    /// labels. Preconditions: the displacement vanishes on ∂Ω and on all
    /// exterior-incident vertices. The move is rejected (with an
    /// [`InvalidityReport`]) when any triangle's signed area falls below
    /// 1e-3 of its original value or any interior vertex crosses the fixed
    /// outer boundary ∂Ω.
    pub fn deform(&self, displacement: &[Vec2], alpha: f64) -> Result<LabeledMesh, MeshError> {
        assert_eq!(displacement.len(), self.vertices.len());
        for (v, d) in displacement.iter().enumerate() {
            if self.vertex_info[v].pinned() && (d.x != 0.0 || d.y != 0.0) {
                return Err(MeshError::ConstrainedVertexMoved { vertex: v });
            }
        }
        let new_vertices: Vec<Vec2> = self
            .vertices
            .iter()
            .zip(displacement)
            .map(|(v, d)| v + alpha * d)
            .collect();

        let mut report = InvalidityReport::default();
        for (t, tri) in self.triangles.iter().enumerate() {
            let old = signed_area(self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]);
            let new = signed_area(new_vertices[tri[0]], new_vertices[tri[1]], new_vertices[tri[2]]);
            if new < 1e-3 * old {
                report.collapsed_triangles.push((t, new / old));
            }
        }
        let scale = self.min_edge_length();
        for (v, d) in displacement.iter().enumerate() {
            if d.x == 0.0 && d.y == 0.0 {
                continue;
            }
            if !self.point_in_domain(new_vertices[v], 1e-12 * scale) {
                report.escaped_vertices.push(v);
            }
        }
        if !report.collapsed_triangles.is_empty() || !report.escaped_vertices.is_empty() {
            return Err(MeshError::InvalidDeformation(report));
        }

        // Topology, labels and all pinned vertices are unchanged, so the
        // derived data carries over.
        Ok(LabeledMesh {
            vertices: new_vertices,
            triangles: self.triangles.clone(),
            labels: self.labels.clone(),
            vertex_info: self.vertex_info.clone(),
            outer_boundary_edges: self.outer_boundary_edges.clone(),
        })
    }

    /// Even-odd test of `p` against the fixed ∂Ω edge set (points within
    /// `boundary_tol` of ∂Ω count as inside).
    pub fn point_in_domain(&self, p: Vec2, boundary_tol: f64) -> bool {
        for &(a, b) in &self.outer_boundary_edges {
            if point_segment_distance(p, self.vertices[a], self.vertices[b]) <= boundary_tol {
                return true;
            }
        }
        let mut inside = false;
        for &(ia, ib) in &self.outer_boundary_edges {
            let (a, b) = (self.vertices[ia], self.vertices[ib]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Evaluates the continuous P1 nodal field `source_field` (one value per
    /// vertex of `self`) at each point of `targets`. Points inside a source
    /// triangle (barycentric slack 1e-10) interpolate; points outside use
    /// the linear extension of the nearest source triangle; points farther
    /// than `max_dist` from every source triangle error with `OutOfDomain`.
    pub fn interpolate(
        &self,
        source_field: &[f64],
        targets: &[Vec2],
        max_dist: f64,
    ) -> Result<Vec<f64>, MeshError> {
        assert_eq!(source_field.len(), self.vertices.len());
        let index = SpatialIndex::build(self, self.min_edge_length().max(max_dist / 4.0));
        let mut out = Vec::with_capacity(targets.len());
        for &p in targets {
            let (t, dist) = index.nearest_triangle(self, p, max_dist);
            let t = match t {
                Some(t) => t,
                None => {
                    return Err(MeshError::OutOfDomain {
                        x: p.x,
                        y: p.y,
                        dist,
                        max_dist,
                    })
                }
            };
            let [a, b, c] = self.triangle_coords(t);
            let lam = crate::geometry::barycentric(p, a, b, c);
            let [ia, ib, ic] = self.triangles[t];
            out.push(
                lam[0] * source_field[ia] + lam[1] * source_field[ib] + lam[2] * source_field[ic],
            );
        }
        Ok(out)
    }

    /// Minimum interior angle (degrees) and min/max area ratio.
    pub fn quality(&self) -> QualityReport {
        let mut min_angle = f64::INFINITY;
        let (mut min_area, mut max_area) = (f64::INFINITY, 0.0_f64);
        for t in 0..self.triangles.len() {
            let c = self.triangle_coords(t);
            for k in 0..3 {
                let u = c[(k + 1) % 3] - c[k];
                let v = c[(k + 2) % 3] - c[k];
                let cosang = u.dot(&v) / (u.norm() * v.norm());
                min_angle = min_angle.min(cosang.clamp(-1.0, 1.0).acos());
            }
            let area = self.area(t);
            min_area = min_area.min(area);
            max_area = max_area.max(area);
        }
        QualityReport {
            min_angle_deg: min_angle.to_degrees(),
            min_area_ratio: min_area / max_area,
        }
    }

    /// Raw arrays (vertices, triangles, labels), e.g. for serialization;
    /// rebuild with [`LabeledMesh::new`].
    pub fn to_raw(&self) -> (Vec<Vec2>, Vec<[usize; 3]>, Vec<Label>) {
        (
            self.vertices.clone(),
            self.triangles.clone(),
            self.labels.clone(),
        )
    }
}

/// Uniform background grid over the mesh bounding box mapping cells to the
/// triangles whose bounding boxes overlap them. Queries return supersets of
/// the exact distance-based neighbor sets.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl SpatialIndex {
    /// Builds the grid with the given cell size (clamped below by a
    /// fraction of the bbox so tiny cell sizes stay affordable).
    pub fn build(mesh: &LabeledMesh, cell_size: f64) -> Self {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in mesh.vertices() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let extent = (hi - lo).amax().max(1e-300);
        let cell = cell_size.max(extent / 512.0);
        let nx = ((hi.x - lo.x) / cell).ceil() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for t in 0..mesh.n_triangles() {
            let c = mesh.triangle_coords(t);
            let (tlo, thi) = bbox(&c);
            let (i0, j0) = Self::cell_of(lo, cell, nx, ny, tlo);
            let (i1, j1) = Self::cell_of(lo, cell, nx, ny, thi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(t);
                }
            }
        }
        SpatialIndex {
            origin: lo,
            cell,
            nx,
            ny,
            cells,
        }
    }

    fn cell_of(origin: Vec2, cell: f64, nx: usize, ny: usize, p: Vec2) -> (usize, usize) {
        let i = (((p.x - origin.x) / cell).floor().max(0.0) as usize).min(nx - 1);
        let j = (((p.y - origin.y) / cell).floor().max(0.0) as usize).min(ny - 1);
        (i, j)
    }

    /// All triangles whose bbox-cells intersect the bbox of triangle `t`
    /// inflated by `radius`; a superset of the triangles within distance
    /// `radius` of `t`. Sorted and deduplicated.
    pub fn query_triangle(&self, mesh: &LabeledMesh, t: usize, radius: f64) -> Vec<usize> {
        let c = mesh.triangle_coords(t);
        let (lo, hi) = bbox(&c);
        self.query_bbox(lo - Vec2::repeat(radius), hi + Vec2::repeat(radius))
    }

    /// All triangles registered in cells overlapping [lo, hi].
    pub fn query_bbox(&self, lo: Vec2, hi: Vec2) -> Vec<usize> {
        let (i0, j0) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, lo);
        let (i1, j1) = Self::cell_of(self.origin, self.cell, self.nx, self.ny, hi);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.cells[j * self.nx + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Nearest triangle to `p` within `max_dist`, searching outward ring by
    /// ring. Returns (None, best_distance_found) when nothing is close
    /// enough.
    pub fn nearest_triangle(
        &self,
        mesh: &LabeledMesh,
        p: Vec2,
        max_dist: f64,
    ) -> (Option<usize>, f64) {
        let mut best: Option<usize> = None;
        let mut best_dist = f64::INFINITY;
        let mut radius = self.cell;
        loop {
            for t in self.query_bbox(p - Vec2::repeat(radius), p + Vec2::repeat(radius)) {
                let d = point_triangle_distance(p, &mesh.triangle_coords(t));
                if d < best_dist {
                    best_dist = d;
                    best = Some(t);
                }
            }
            // A hit is conclusive only once the search ring covers it.
            if best_dist <= radius {
                break;
            }
            if radius > max_dist + self.cell {
                break;
            }
            radius *= 2.0;
        }
        if best_dist <= max_dist {
            (best, best_dist)
        } else {
            (None, best_dist)
        }
    }
}

fn bbox(c: &[Vec2; 3]) -> (Vec2, Vec2) {
    (c[0].inf(&c[1]).inf(&c[2]), c[0].sup(&c[1]).sup(&c[2]))
}

/// Distance from `p` to the closed triangle `c` (0 inside).
pub fn point_triangle_distance(p: Vec2, c: &[Vec2; 3]) -> f64 {
    if point_in_triangle(p, c[0], c[1], c[2], 0.0) {
        return 0.0;
    }
    (0..3)
        .map(|k| point_segment_distance(p, c[k], c[(k + 1) % 3]))
        .fold(f64::INFINITY, f64::min)
}

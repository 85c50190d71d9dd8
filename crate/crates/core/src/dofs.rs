//! Degree-of-freedom numbering for the broken P1 space H(Γ).
//!
//! The trial space is a product of a local side (H¹-type on Ω_l, zero trace
//! on ∂Ω ∩ ∂Ω_l) and a nonlocal side (L²-type on Ω_nl ∪ I, zero volume
//! constraint on the exterior layer I). A vertex carries a local degree of
//! freedom iff it touches a LOCAL triangle and a nonlocal one iff it touches
//! a NONLOCAL or EXTERIOR triangle, so interface vertices carry two
//! independent unknowns — the discrete fields may jump across Γ.
//!
//! Free unknowns are numbered contiguously, local side first:
//! `0..n_local_free`, then `n_local_free..n_free`.

use crate::mesh::{Label, LabeledMesh};

/// Which side of the broken space a coefficient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Local,
    Nonlocal,
}

impl Side {
    /// The side whose basis functions live on triangles with `label`.
    pub fn of_label(label: Label) -> Side {
        match label {
            Label::Local => Side::Local,
            Label::Nonlocal | Label::Exterior => Side::Nonlocal,
        }
    }
}

/// State of one (vertex, side) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofStatus {
    /// Unknown with its index into the free coefficient vector.
    Free(usize),
    /// Homogeneous Dirichlet / volume-constrained slot (value 0).
    Constrained,
    /// The vertex touches no triangle of this side.
    Absent,
}

impl DofStatus {
    pub fn free_index(self) -> Option<usize> {
        match self {
            DofStatus::Free(i) => Some(i),
            _ => None,
        }
    }

    pub fn exists(self) -> bool {
        !matches!(self, DofStatus::Absent)
    }
}

/// Vertex → degree-of-freedom maps for both sides of the broken space.
#[derive(Debug, Clone)]
pub struct DofMap {
    local: Vec<DofStatus>,
    nonlocal: Vec<DofStatus>,
    n_local_free: usize,
    n_nonlocal_free: usize,
    /// Reverse map: free index → (side, vertex).
    free_to_vertex: Vec<(Side, usize)>,
}

impl DofMap {
    /// Builds the numbering from the vertex incidence flags:
    /// - local slot: exists iff the vertex touches a LOCAL triangle,
    ///   constrained iff the vertex lies on the outer boundary ∂Ω;
    /// - nonlocal slot: exists iff the vertex touches a NONLOCAL or EXTERIOR
    ///   triangle, constrained iff it touches an EXTERIOR triangle (the
    ///   volume constraint reaches the rim ∂Ω of the interaction layer).
    pub fn new(mesh: &LabeledMesh) -> DofMap {
        let n = mesh.n_vertices();
        let mut local = vec![DofStatus::Absent; n];
        let mut nonlocal = vec![DofStatus::Absent; n];
        let mut free_to_vertex = Vec::new();

        let mut next = 0usize;
        for v in 0..n {
            let info = mesh.vertex_info(v);
            if info.local_side() {
                local[v] = if info.on_outer_boundary() {
                    DofStatus::Constrained
                } else {
                    let s = DofStatus::Free(next);
                    free_to_vertex.push((Side::Local, v));
                    next += 1;
                    s
                };
            }
        }
        let n_local_free = next;
        for v in 0..n {
            let info = mesh.vertex_info(v);
            if info.nonlocal_side() || info.exterior_side() {
                nonlocal[v] = if info.exterior_side() {
                    DofStatus::Constrained
                } else {
                    let s = DofStatus::Free(next);
                    free_to_vertex.push((Side::Nonlocal, v));
                    next += 1;
                    s
                };
            }
        }
        let n_nonlocal_free = next - n_local_free;

        DofMap {
            local,
            nonlocal,
            n_local_free,
            n_nonlocal_free,
            free_to_vertex,
        }
    }

    /// Variant with every existing slot free (no Dirichlet elimination),
    /// used to test structural identities of the unconstrained forms such
    /// as constant annihilation by the difference blocks.
    pub fn unconstrained(mesh: &LabeledMesh) -> DofMap {
        let n = mesh.n_vertices();
        let mut local = vec![DofStatus::Absent; n];
        let mut nonlocal = vec![DofStatus::Absent; n];
        let mut free_to_vertex = Vec::new();
        let mut next = 0usize;
        for v in 0..n {
            if mesh.vertex_info(v).local_side() {
                local[v] = DofStatus::Free(next);
                free_to_vertex.push((Side::Local, v));
                next += 1;
            }
        }
        let n_local_free = next;
        for v in 0..n {
            let info = mesh.vertex_info(v);
            if info.nonlocal_side() || info.exterior_side() {
                nonlocal[v] = DofStatus::Free(next);
                free_to_vertex.push((Side::Nonlocal, v));
                next += 1;
            }
        }
        DofMap {
            local,
            nonlocal,
            n_local_free,
            n_nonlocal_free: next - n_local_free,
            free_to_vertex,
        }
    }

    pub fn n_free(&self) -> usize {
        self.n_local_free + self.n_nonlocal_free
    }

    pub fn n_local_free(&self) -> usize {
        self.n_local_free
    }

    pub fn n_nonlocal_free(&self) -> usize {
        self.n_nonlocal_free
    }

    pub fn n_vertices(&self) -> usize {
        self.local.len()
    }

    pub fn local_status(&self, v: usize) -> DofStatus {
        self.local[v]
    }

    pub fn nonlocal_status(&self, v: usize) -> DofStatus {
        self.nonlocal[v]
    }

    pub fn status(&self, side: Side, v: usize) -> DofStatus {
        match side {
            Side::Local => self.local[v],
            Side::Nonlocal => self.nonlocal[v],
        }
    }

    /// Statuses of a triangle's three vertices on the side its label selects.
    pub fn triangle_dofs(&self, mesh: &LabeledMesh, t: usize) -> [DofStatus; 3] {
        let side = Side::of_label(mesh.label(t));
        let [a, b, c] = mesh.triangle(t);
        [
            self.status(side, a),
            self.status(side, b),
            self.status(side, c),
        ]
    }

    /// (side, vertex) owning the free index `i`.
    pub fn vertex_of_free(&self, i: usize) -> (Side, usize) {
        self.free_to_vertex[i]
    }

    /// True when `i` indexes a local-side unknown.
    pub fn is_local_index(&self, i: usize) -> bool {
        i < self.n_local_free
    }
}

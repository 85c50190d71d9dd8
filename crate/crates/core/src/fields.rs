//! Piecewise-linear coefficient fields over the broken space and source
//! terms for the right-hand side.

use crate::dofs::{DofMap, DofStatus, Side};
use crate::geometry::Vec2;
use crate::mesh::{Label, LabeledMesh};

/// A finite element function in the broken space: one coefficient per free
/// degree of freedom, constrained slots implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenField {
    pub free: Vec<f64>,
}

impl BrokenField {
    pub fn zeros(map: &DofMap) -> BrokenField {
        BrokenField {
            free: vec![0.0; map.n_free()],
        }
    }

    pub fn from_free(free: Vec<f64>) -> BrokenField {
        BrokenField { free }
    }

    /// Coefficient at vertex `v` on `side` (0 for constrained slots).
    /// Absent slots also evaluate to 0; they are never reached when sampling
    /// a triangle of the matching side.
    pub fn nodal(&self, map: &DofMap, side: Side, v: usize) -> f64 {
        match map.status(side, v) {
            DofStatus::Free(i) => self.free[i],
            DofStatus::Constrained | DofStatus::Absent => 0.0,
        }
    }

    /// Projects the broken field to a continuous nodal field: one-sided
    /// vertices take their side's coefficient, interface vertices (both
    /// slots present) take the side average.
    pub fn nodal_projection(&self, map: &DofMap) -> Vec<f64> {
        (0..map.n_vertices())
            .map(|v| {
                let has_l = map.local_status(v).exists();
                let has_n = map.nonlocal_status(v).exists();
                match (has_l, has_n) {
                    (true, true) => {
                        0.5 * (self.nodal(map, Side::Local, v)
                            + self.nodal(map, Side::Nonlocal, v))
                    }
                    (true, false) => self.nodal(map, Side::Local, v),
                    (false, true) => self.nodal(map, Side::Nonlocal, v),
                    (false, false) => 0.0,
                }
            })
            .collect()
    }

    /// The three nodal coefficients of triangle `t` on the side owning it.
    pub fn triangle_values(&self, map: &DofMap, mesh: &LabeledMesh, t: usize) -> [f64; 3] {
        let side = Side::of_label(mesh.label(t));
        let [a, b, c] = mesh.triangle(t);
        [
            self.nodal(map, side, a),
            self.nodal(map, side, b),
            self.nodal(map, side, c),
        ]
    }

    /// Value at barycentric coordinates `bary` inside triangle `t`.
    pub fn eval_on_triangle(
        &self,
        map: &DofMap,
        mesh: &LabeledMesh,
        t: usize,
        bary: [f64; 3],
    ) -> f64 {
        let v = self.triangle_values(map, mesh, t);
        bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2]
    }

    /// Constant gradient of the field on triangle `t`.
    pub fn gradient_on_triangle(&self, map: &DofMap, mesh: &LabeledMesh, t: usize) -> Vec2 {
        let coords = mesh.triangle_coords(t);
        let (grads, _) = crate::assembly_local::p1_gradients(&coords);
        let v = self.triangle_values(map, mesh, t);
        v[0] * grads[0] + v[1] * grads[1] + v[2] * grads[2]
    }

    /// Projects the broken field to a continuous nodal field on all mesh
    /// vertices: where both sides own the vertex (on Γ) the two coefficients
    /// are averaged, elsewhere the single existing side is taken; vertices
    /// owned by neither side (possible only in meshes without that side)
    /// get 0. Exterior-constrained and boundary-constrained slots contribute
    /// their prescribed zeros.
    pub fn project_continuous(&self, map: &DofMap, mesh: &LabeledMesh) -> Vec<f64> {
        let n = mesh.n_vertices();
        let mut out = vec![0.0; n];
        for v in 0..n {
            let l = map.local_status(v);
            let nl = map.nonlocal_status(v);
            out[v] = match (l.exists(), nl.exists()) {
                (true, true) => {
                    0.5 * (self.nodal(map, Side::Local, v) + self.nodal(map, Side::Nonlocal, v))
                }
                (true, false) => self.nodal(map, Side::Local, v),
                (false, true) => self.nodal(map, Side::Nonlocal, v),
                (false, false) => 0.0,
            };
        }
        out
    }

    /// ‖u‖_{L²(Ω)}² over the local and nonlocal subdomains (exact for P1).
    pub fn l2_norm_squared(&self, map: &DofMap, mesh: &LabeledMesh) -> f64 {
        let mut total = 0.0;
        for t in 0..mesh.n_triangles() {
            if mesh.label(t) == Label::Exterior {
                continue;
            }
            let v = self.triangle_values(map, mesh, t);
            let area = mesh.area(t);
            // ∫_T (Σ λ_i v_i)² = area/6 · Σ v_i² + area/12 · Σ_{i≠j} v_i v_j.
            let sum: f64 = v.iter().sum();
            let sq: f64 = v.iter().map(|x| x * x).sum();
            total += area / 12.0 * (sq + sum * sum);
        }
        total
    }
}

/// Right-hand-side forcing f over Ω, evaluable per subdomain.
pub trait SourceTerm: Sync {
    fn value(&self, label: Label, x: Vec2) -> f64;
    /// Per-subdomain spatial gradient (0 for piecewise constants).
    fn gradient(&self, label: Label, x: Vec2) -> Vec2 {
        let _ = (label, x);
        Vec2::new(0.0, 0.0)
    }
}

/// f = f_l χ_{Ω_l} + f_nl χ_{Ω_nl} (zero on the exterior layer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseConstant {
    pub f_local: f64,
    pub f_nonlocal: f64,
}

impl PiecewiseConstant {
    pub fn new(f_local: f64, f_nonlocal: f64) -> Self {
        PiecewiseConstant { f_local, f_nonlocal }
    }
}

impl SourceTerm for PiecewiseConstant {
    fn value(&self, label: Label, _x: Vec2) -> f64 {
        match label {
            Label::Local => self.f_local,
            Label::Nonlocal => self.f_nonlocal,
            Label::Exterior => 0.0,
        }
    }
}

/// A smooth forcing given by closures, for derivative checks with ∇f ≠ 0.
pub struct AnalyticSource<F, G>
where
    F: Fn(Vec2) -> f64 + Sync,
    G: Fn(Vec2) -> Vec2 + Sync,
{
    pub value: F,
    pub grad: G,
}

impl<F, G> SourceTerm for AnalyticSource<F, G>
where
    F: Fn(Vec2) -> f64 + Sync,
    G: Fn(Vec2) -> Vec2 + Sync,
{
    fn value(&self, label: Label, x: Vec2) -> f64 {
        match label {
            Label::Exterior => 0.0,
            _ => (self.value)(x),
        }
    }
    fn gradient(&self, label: Label, x: Vec2) -> Vec2 {
        match label {
            Label::Exterior => Vec2::new(0.0, 0.0),
            _ => (self.grad)(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use approx::assert_relative_eq;

    #[test]
    fn projection_averages_on_the_interface() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let mut u = BrokenField::zeros(&map);
        // local side ≡ 2, nonlocal side ≡ 4 on the free dofs
        for i in 0..map.n_free() {
            u.free[i] = if map.is_local_index(i) { 2.0 } else { 4.0 };
        }
        let cont = u.project_continuous(&map, &mesh);
        for v in 0..mesh.n_vertices() {
            let info = mesh.vertex_info(v);
            if info.on_interface() {
                assert_relative_eq!(cont[v], 3.0);
            } else if info.local_side() && !info.on_outer_boundary() && !info.exterior_side() {
                assert_relative_eq!(cont[v], 2.0);
            }
        }
    }

    #[test]
    fn l2_norm_of_constant_one_is_domain_area() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let mut u = BrokenField::zeros(&map);
        for x in u.free.iter_mut() {
            *x = 1.0;
        }
        // The field is 1 on free dofs and 0 on constrained ones, so the norm
        // undershoots the Ω area; on interior triangles away from ∂Ω the
        // integrand is exactly 1. Compare on a fully free triangle.
        let t = (0..mesh.n_triangles())
            .find(|&t| {
                mesh.label(t) == Label::Local
                    && mesh
                        .triangle(t)
                        .iter()
                        .all(|&v| matches!(map.local_status(v), DofStatus::Free(_)))
            })
            .unwrap();
        let vals = u.triangle_values(&map, &mesh, t);
        assert_eq!(vals, [1.0; 3]);
        // gradient of a constant vanishes
        let g = u.gradient_on_triangle(&map, &mesh, t);
        assert!(g.norm() < 1e-13);
    }

    #[test]
    fn linear_field_is_reproduced() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let mut u = BrokenField::zeros(&map);
        for i in 0..map.n_free() {
            let (_, v) = map.vertex_of_free(i);
            let p = mesh.vertex(v);
            u.free[i] = 2.0 * p.x - 3.0 * p.y;
        }
        // On any triangle whose dofs are all free the gradient is (2, -3).
        for t in 0..mesh.n_triangles() {
            let side = Side::of_label(mesh.label(t));
            let all_free = mesh
                .triangle(t)
                .iter()
                .all(|&v| matches!(map.status(side, v), DofStatus::Free(_)));
            if all_free {
                let g = u.gradient_on_triangle(&map, &mesh, t);
                assert_relative_eq!(g.x, 2.0, epsilon = 1e-10);
                assert_relative_eq!(g.y, -3.0, epsilon = 1e-10);
            }
        }
    }
}

//! P1 continuous-Galerkin assembly of the single-integral blocks: the
//! Laplace stiffness on Ω_l, mass matrices, load vectors, and weighted mass
//! matrices with kernel-integral weights.
//!
//! All routines emit triplets in the global free-dof numbering of a
//! [`DofMap`]; constrained rows and columns are eliminated symmetrically
//! (all constraints are homogeneous, so no right-hand-side shift appears).

use crate::dofs::{DofMap, DofStatus, Side};
use crate::fields::SourceTerm;
use crate::geometry::Vec2;
use crate::mesh::{Label, LabeledMesh};
use crate::quad::TriangleRule;
use crate::sparse::TripletList;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("negative weight {value:.3e} at quadrature point ({x:.6}, {y:.6})")]
    NegativeWeight { value: f64, x: f64, y: f64 },
}

/// Constant P1 shape-function gradients and the triangle area.
pub fn p1_gradients(coords: &[Vec2; 3]) -> ([Vec2; 3], f64) {
    let [a, b, c] = *coords;
    let area2 = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    let inv = 1.0 / area2;
    let g0 = Vec2::new(b.y - c.y, c.x - b.x) * inv;
    let g1 = Vec2::new(c.y - a.y, a.x - c.x) * inv;
    let g2 = Vec2::new(a.y - b.y, b.x - a.x) * inv;
    ([g0, g1, g2], 0.5 * area2)
}

/// Element stiffness: K_ij = area · ∇λ_i · ∇λ_j.
pub fn element_stiffness(coords: &[Vec2; 3]) -> [[f64; 3]; 3] {
    let (g, area) = p1_gradients(coords);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * g[i].dot(&g[j]);
        }
    }
    k
}

/// Element consistent mass: M_ij = area/12 · (1 + δ_ij).
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let off = area / 12.0;
    let diag = area / 6.0;
    [
        [diag, off, off],
        [off, diag, off],
        [off, off, diag],
    ]
}

fn scatter_element(
    triplets: &mut TripletList,
    dofs: &[DofStatus; 3],
    elem: &[[f64; 3]; 3],
) {
    for i in 0..3 {
        let DofStatus::Free(gi) = dofs[i] else { continue };
        for j in 0..3 {
            let DofStatus::Free(gj) = dofs[j] else { continue };
            triplets.push(gi, gj, elem[i][j]);
        }
    }
}

/// Stiffness block ∫_{Ω_l} ∇u_l · ∇v_l over the free dofs.
pub fn assemble_laplace(mesh: &LabeledMesh, map: &DofMap) -> TripletList {
    let n = map.n_free();
    let mut triplets = TripletList::new(n, n);
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) != Label::Local {
            continue;
        }
        let k = element_stiffness(&mesh.triangle_coords(t));
        scatter_element(&mut triplets, &map.triangle_dofs(mesh, t), &k);
    }
    triplets
}

/// Mass block ∫_{region} u v over the side owning `region`.
pub fn assemble_mass(mesh: &LabeledMesh, region: Label, map: &DofMap) -> TripletList {
    let n = map.n_free();
    let mut triplets = TripletList::new(n, n);
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) != region {
            continue;
        }
        let m = element_mass(mesh.area(t));
        scatter_element(&mut triplets, &map.triangle_dofs(mesh, t), &m);
    }
    triplets
}

/// Load vector F(v) = ∫_{Ω_l} f v_l + ∫_{Ω_nl} f v_nl over the free dofs.
pub fn assemble_load(
    mesh: &LabeledMesh,
    f: &dyn SourceTerm,
    map: &DofMap,
    rule: &TriangleRule,
) -> Vec<f64> {
    let mut rhs = vec![0.0; map.n_free()];
    for t in 0..mesh.n_triangles() {
        let label = mesh.label(t);
        if label == Label::Exterior {
            continue;
        }
        let coords = mesh.triangle_coords(t);
        let area = mesh.area(t);
        let dofs = map.triangle_dofs(mesh, t);
        for &(bary, w) in &rule.points {
            let x = bary[0] * coords[0] + bary[1] * coords[1] + bary[2] * coords[2];
            let fv = f.value(label, x) * w * area;
            for i in 0..3 {
                if let DofStatus::Free(gi) = dofs[i] {
                    rhs[gi] += fv * bary[i];
                }
            }
        }
    }
    rhs
}

/// Weighted mass ∫_{region} w(x) u(x) v(x) dx on the side owning `region`,
/// by the given quadrature rule. Rejects negative weights (the kernel
/// integrals feeding this block are nonnegative by (K1)).
pub fn assemble_weighted_mass(
    mesh: &LabeledMesh,
    region: Label,
    weight: &(dyn Fn(Vec2) -> f64 + Sync),
    map: &DofMap,
    rule: &TriangleRule,
) -> Result<TripletList, AssemblyError> {
    let n = map.n_free();
    let mut triplets = TripletList::new(n, n);
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) != region {
            continue;
        }
        let coords = mesh.triangle_coords(t);
        let area = mesh.area(t);
        let dofs = map.triangle_dofs(mesh, t);
        for &(bary, w) in &rule.points {
            let x = bary[0] * coords[0] + bary[1] * coords[1] + bary[2] * coords[2];
            let wx = weight(x);
            if wx < 0.0 {
                return Err(AssemblyError::NegativeWeight {
                    value: wx,
                    x: x.x,
                    y: x.y,
                });
            }
            let scale = wx * w * area;
            for i in 0..3 {
                let DofStatus::Free(gi) = dofs[i] else { continue };
                for j in 0..3 {
                    let DofStatus::Free(gj) = dofs[j] else { continue };
                    triplets.push(gi, gj, scale * bary[i] * bary[j]);
                }
            }
        }
    }
    Ok(triplets)
}

/// Mass-weighted residual vector r_i = ∫_Ω (u − ū) φ_i dx over the free
/// dofs, where u is broken (side-appropriate per triangle) and ū is a
/// continuous nodal field. Exact for P1 data.
pub fn assemble_tracking_residual(
    mesh: &LabeledMesh,
    map: &DofMap,
    u_free: &[f64],
    ubar_nodal: &[f64],
) -> Vec<f64> {
    let mut rhs = vec![0.0; map.n_free()];
    for t in 0..mesh.n_triangles() {
        let label = mesh.label(t);
        if label == Label::Exterior {
            continue;
        }
        let side = Side::of_label(label);
        let verts = mesh.triangle(t);
        let m = element_mass(mesh.area(t));
        let mut diff = [0.0; 3];
        for (k, &v) in verts.iter().enumerate() {
            let uv = match map.status(side, v) {
                DofStatus::Free(i) => u_free[i],
                _ => 0.0,
            };
            diff[k] = uv - ubar_nodal[v];
        }
        let dofs = map.triangle_dofs(mesh, t);
        for i in 0..3 {
            if let DofStatus::Free(gi) = dofs[i] {
                for j in 0..3 {
                    rhs[gi] += m[i][j] * diff[j];
                }
            }
        }
    }
    rhs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::PiecewiseConstant;
    use crate::samples;
    use approx::assert_relative_eq;

    fn unit_right_triangle() -> [Vec2; 3] {
        [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn element_stiffness_unit_right_triangle() {
        let k = element_stiffness(&unit_right_triangle());
        let expect = [
            [1.0, -0.5, -0.5],
            [-0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.5],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(k[i][j], expect[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn element_mass_unit_right_triangle() {
        let m = element_mass(0.5);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert_relative_eq!(m[i][j], expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_annihilates_constants_elementwise() {
        let coords = [
            Vec2::new(0.2, -0.1),
            Vec2::new(1.3, 0.4),
            Vec2::new(0.5, 1.1),
        ];
        let k = element_stiffness(&coords);
        for i in 0..3 {
            let row_sum: f64 = k[i].iter().sum();
            assert!(row_sum.abs() < 1e-14);
        }
    }

    #[test]
    fn load_constant_one_per_triangle_node() {
        // Unit right triangle alone, labeled NONLOCAL with no constraints:
        // f ≡ 1 gives area/3 = 1/6 per node.
        let mesh = crate::mesh::LabeledMesh::new(
            unit_right_triangle().to_vec(),
            vec![[0, 1, 2]],
            vec![Label::Nonlocal],
        )
        .unwrap();
        let map = DofMap::new(&mesh);
        assert_eq!(map.n_free(), 3);
        let f = PiecewiseConstant::new(0.0, 1.0);
        let rhs = assemble_load(&mesh, &f, &map, &TriangleRule::degree5());
        for v in rhs {
            assert_relative_eq!(v, 1.0 / 6.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn mass_total_equals_region_area() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        // Mass over Ω_nl is entirely free (interface dofs free on both
        // sides, interior nonlocal free), so the total entry sum equals the
        // nonlocal area.
        let m = assemble_mass(&mesh, Label::Nonlocal, &map);
        let total: f64 = {
            let d = m.to_dense();
            d.iter().sum()
        };
        let area: f64 = mesh
            .triangles_with_label(Label::Nonlocal)
            .iter()
            .map(|&t| mesh.area(t))
            .sum();
        assert_relative_eq!(total, area, epsilon = 1e-12);
    }

    #[test]
    fn weighted_mass_with_constant_weight_scales_plain_mass() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let plain = assemble_mass(&mesh, Label::Nonlocal, &map).to_dense();
        let weighted = assemble_weighted_mass(
            &mesh,
            Label::Nonlocal,
            &|_x| 3.0,
            &map,
            &TriangleRule::degree5(),
        )
        .unwrap()
        .to_dense();
        let diff = (&weighted - 3.0 * &plain).abs().max();
        assert!(diff < 1e-12 * weighted.abs().max());
    }

    #[test]
    fn weighted_mass_rejects_negative_weight() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let err = assemble_weighted_mass(
            &mesh,
            Label::Nonlocal,
            &|_x| -1.0,
            &map,
            &TriangleRule::degree1(),
        );
        assert!(matches!(err, Err(AssemblyError::NegativeWeight { .. })));
    }

    #[test]
    fn laplace_block_is_symmetric_and_nonnegative() {
        let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
        let map = DofMap::new(&mesh);
        let k = assemble_laplace(&mesh, &map).to_dense();
        let asym = (&k - &k.transpose()).abs().max();
        assert!(asym < 1e-13 * k.abs().max());
        // quadratic form nonnegative on a few vectors
        for seed in 0..5u64 {
            let x = nalgebra::DVector::from_fn(map.n_free(), |i, _| {
                ((i as f64 + 1.3) * (seed as f64 + 0.7)).sin()
            });
            let q = (&x.transpose() * &k * &x)[(0, 0)];
            assert!(q >= -1e-12);
        }
    }
}

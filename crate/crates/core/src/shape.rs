//! Objective evaluation, shape-derivative assembly over nodal vector basis
//! functions, interface localization, the harmonic weight field μ, and the
//! elasticity Riesz representation of the shape gradient.
//!
//! Every derivative routine returns the directional derivatives with respect
//! to the P1 nodal velocity basis: a vector of length `2 · n_vertices`,
//! entry `2·v + m` holding dJ[λ_v e_m]. Dotting with a nodal velocity field
//! gives the derivative along that field. All terms differentiate the
//! transported integrals with the discrete fields' coefficients frozen (the
//! state/adjoint sensitivity enters through the adjoint pairing), so each
//! assembled value is the exact derivative of its mesh-quadrature integral.

use crate::assembly_local::{element_mass, p1_gradients};
use crate::assembly_nonlocal::{assemble_nl_shape_derivative, PairRule};
use crate::dofs::DofMap;
use crate::fields::{BrokenField, SourceTerm};
use crate::geometry::Vec2;
use crate::kernels::Kernel;
use crate::mesh::{InterfaceCurve, Label, LabeledMesh};
use crate::quad::TriangleRule;
use crate::sparse::{csc_matvec, SolveError, SymmetricSolver, TripletList};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("invalid weight bounds: need 0 ≤ μ_min ≤ μ_max and μ_max > 0, got [{mu_min}, {mu_max}]")]
    BadMuBounds { mu_min: f64, mu_max: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
}

/// ½ ∫_Ω (u − ū)² dx + ν |Γ| with the tracking integral evaluated exactly
/// for the P1 fields (element mass matrices) and |Γ| the polyline length.
pub fn eval_objective(
    mesh: &LabeledMesh,
    map: &DofMap,
    u: &BrokenField,
    ubar: &[f64],
    nu: f64,
    interface: &InterfaceCurve,
) -> f64 {
    let mut tracking = 0.0;
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) == Label::Exterior {
            continue;
        }
        let verts = mesh.triangle(t);
        let uv = u.triangle_values(map, mesh, t);
        let m = element_mass(mesh.area(t));
        let d = [
            uv[0] - ubar[verts[0]],
            uv[1] - ubar[verts[1]],
            uv[2] - ubar[verts[2]],
        ];
        for i in 0..3 {
            for j in 0..3 {
                tracking += d[i] * m[i][j] * d[j];
            }
        }
    }
    0.5 * tracking + nu * interface.total_length(mesh)
}

/// Tracking term ∫_Ω −(u − ū)(∇ū · V) + ½ (u − ū)² div V dx, where ū is
/// the spatially fixed data sampled through the moving mesh (its nodal
/// values follow ū's own gradient, the per-triangle P1 gradient here).
pub fn tracking_term(
    mesh: &LabeledMesh,
    map: &DofMap,
    u: &BrokenField,
    ubar: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) == Label::Exterior {
            continue;
        }
        let verts = mesh.triangle(t);
        let (grads, area) = p1_gradients(&mesh.triangle_coords(t));
        let uv = u.triangle_values(map, mesh, t);
        let mass = element_mass(area);
        let mut grad_ubar = Vec2::zeros();
        let mut d = [0.0; 3];
        for i in 0..3 {
            grad_ubar += ubar[verts[i]] * grads[i];
            d[i] = uv[i] - ubar[verts[i]];
        }
        // md[i] = ∫_T (u − ū) λ_i dx, q = ∫_T (u − ū)² dx (both exact).
        let mut md = [0.0; 3];
        let mut q = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                md[i] += mass[i][j] * d[j];
            }
            q += d[i] * md[i];
        }
        for w in 0..3 {
            let o = 2 * verts[w];
            out[o] += -md[w] * grad_ubar.x + 0.5 * q * grads[w].x;
            out[o + 1] += -md[w] * grad_ubar.y + 0.5 * q * grads[w].y;
        }
    }
    out
}

/// Derivative of the local stiffness pairing ∫_{Ω_l} ∇u·∇p dx under mesh
/// velocity: ∫ (div V) ∇u·∇p − (∇V + ∇Vᵀ)∇u · ∇p dx, elementwise exact for
/// frozen P1 coefficients.
pub fn local_energy_term(
    mesh: &LabeledMesh,
    map: &DofMap,
    u: &BrokenField,
    p: &BrokenField,
) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) != Label::Local {
            continue;
        }
        let verts = mesh.triangle(t);
        let (grads, area) = p1_gradients(&mesh.triangle_coords(t));
        let uv = u.triangle_values(map, mesh, t);
        let pv = p.triangle_values(map, mesh, t);
        let mut gu = Vec2::zeros();
        let mut gp = Vec2::zeros();
        for i in 0..3 {
            gu += uv[i] * grads[i];
            gp += pv[i] * grads[i];
        }
        let gugp = gu.dot(&gp);
        for w in 0..3 {
            let o = 2 * verts[w];
            let gw_gu = grads[w].dot(&gu);
            let gw_gp = grads[w].dot(&gp);
            out[o] += area * (-(gw_gu * gp.x) - gw_gp * gu.x + gugp * grads[w].x);
            out[o + 1] += area * (-(gw_gu * gp.y) - gw_gp * gu.y + gugp * grads[w].y);
        }
    }
    out
}

/// Derivative of the load pairing ∫_Ω f p dx under mesh velocity:
/// ∫ (∇f · V) p + f p div V dx. Label-attached sources (piecewise
/// constants) have zero spatial gradient and contribute only the
/// divergence part.
pub fn force_term(
    mesh: &LabeledMesh,
    source: &dyn SourceTerm,
    map: &DofMap,
    p: &BrokenField,
    rule: &TriangleRule,
) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let label = mesh.label(t);
        if label == Label::Exterior {
            continue;
        }
        let verts = mesh.triangle(t);
        let coords = mesh.triangle_coords(t);
        let (grads, area) = p1_gradients(&coords);
        let pv = p.triangle_values(map, mesh, t);
        for &(bary, wq) in &rule.points {
            let x = bary[0] * coords[0] + bary[1] * coords[1] + bary[2] * coords[2];
            let pq = bary[0] * pv[0] + bary[1] * pv[1] + bary[2] * pv[2];
            let fv = source.value(label, x);
            let g = source.gradient(label, x);
            let w = wq * area * pq;
            for i in 0..3 {
                let o = 2 * verts[i];
                out[o] += w * (g.x * bary[i] + fv * grads[i].x);
                out[o + 1] += w * (g.y * bary[i] + fv * grads[i].y);
            }
        }
    }
    out
}

/// Derivative of ν |Γ| for the polyline interface: moving endpoint b of an
/// edge along V changes its length by τ̂·V(b) (and −τ̂·V(a) for a), the
/// discrete counterpart of ν ∫_Γ div_Γ V ds.
pub fn perimeter_term(mesh: &LabeledMesh, interface: &InterfaceCurve, nu: f64) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.n_vertices()];
    for e in &interface.edges {
        let a = mesh.vertex(e.a);
        let b = mesh.vertex(e.b);
        let t = b - a;
        let len = t.norm();
        if len == 0.0 {
            continue;
        }
        let tau = t / len;
        out[2 * e.a] -= nu * tau.x;
        out[2 * e.a + 1] -= nu * tau.y;
        out[2 * e.b] += nu * tau.x;
        out[2 * e.b + 1] += nu * tau.y;
    }
    out
}

/// True for every vertex belonging to a triangle that touches Γ (has an
/// interface vertex), excluding pinned vertices. Entries outside the mask
/// are zeroed before the gradient is extended to a velocity field.
pub fn interface_patch_mask(mesh: &LabeledMesh) -> Vec<bool> {
    let mut keep = vec![false; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let verts = mesh.triangle(t);
        if verts.iter().any(|&v| mesh.vertex_info(v).on_interface()) {
            for &v in &verts {
                keep[v] = true;
            }
        }
    }
    for (v, k) in keep.iter_mut().enumerate() {
        if mesh.vertex_info(v).pinned() {
            *k = false;
        }
    }
    keep
}

/// Zeroes both components of every vertex outside the interface mask.
pub fn apply_interface_mask(mesh: &LabeledMesh, derivative: &mut [f64]) {
    let keep = interface_patch_mask(mesh);
    for (v, &k) in keep.iter().enumerate() {
        if !k {
            derivative[2 * v] = 0.0;
            derivative[2 * v + 1] = 0.0;
        }
    }
}

/// The five shape-derivative contributions, separately assembled.
#[derive(Debug, Clone)]
pub struct DerivativeParts {
    pub tracking: Vec<f64>,
    pub local: Vec<f64>,
    pub nonlocal: Vec<f64>,
    pub force: Vec<f64>,
    /// Already scaled by ν.
    pub perimeter: Vec<f64>,
}

impl DerivativeParts {
    /// dJ^red = tracking + perimeter + energy terms − force term (the force
    /// pairing enters the Lagrangian as −F(p)).
    pub fn total(&self) -> Vec<f64> {
        let n = self.tracking.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = self.tracking[i] + self.perimeter[i] + self.local[i] + self.nonlocal[i]
                - self.force[i];
        }
        out
    }

    /// Total with off-interface entries zeroed.
    pub fn masked_total(&self, mesh: &LabeledMesh) -> Vec<f64> {
        let mut t = self.total();
        apply_interface_mask(mesh, &mut t);
        t
    }
}

/// Assembles all five contributions at the solved state `u` and adjoint `p`.
#[allow(clippy::too_many_arguments)]
pub fn full_shape_derivative(
    mesh: &LabeledMesh,
    map: &DofMap,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    u: &BrokenField,
    p: &BrokenField,
    ubar: &[f64],
    pairs: &[(usize, usize)],
    pair_rule: &PairRule,
    load_rule: &TriangleRule,
    nu: f64,
    interface: &InterfaceCurve,
) -> DerivativeParts {
    DerivativeParts {
        tracking: tracking_term(mesh, map, u, ubar),
        local: local_energy_term(mesh, map, u, p),
        nonlocal: assemble_nl_shape_derivative(mesh, kernel, map, u, p, pairs, pair_rule),
        force: force_term(mesh, source, map, p, load_rule),
        perimeter: perimeter_term(mesh, interface, nu),
    }
}

/// Harmonic weight field: Δμ = 0 on Ω, μ = μ_max on Γ, μ = μ_min on ∂Ω,
/// solved with continuous P1 elements over the non-exterior triangles.
/// Vertices outside Ω report μ_min. On the non-obtuse-dominant meshes used
/// here the discrete maximum principle keeps μ inside [μ_min, μ_max].
pub fn solve_mu(mesh: &LabeledMesh, mu_min: f64, mu_max: f64) -> Result<Vec<f64>, ShapeError> {
    if !(mu_max > 0.0) || !(mu_min >= 0.0) || mu_min > mu_max {
        return Err(ShapeError::BadMuBounds { mu_min, mu_max });
    }
    let n = mesh.n_vertices();
    // Vertex classes: Dirichlet value, free index, or outside Ω.
    let mut dirichlet: Vec<Option<f64>> = vec![None; n];
    let mut free: Vec<Option<usize>> = vec![None; n];
    let mut n_free = 0;
    for v in 0..n {
        let info = mesh.vertex_info(v);
        if !info.local_side() && !info.nonlocal_side() {
            continue;
        }
        if info.on_interface() {
            dirichlet[v] = Some(mu_max);
        } else if info.on_outer_boundary() {
            dirichlet[v] = Some(mu_min);
        } else {
            free[v] = Some(n_free);
            n_free += 1;
        }
    }

    let mut mu = vec![mu_min; n];
    for v in 0..n {
        if let Some(d) = dirichlet[v] {
            mu[v] = d;
        }
    }
    if n_free == 0 {
        return Ok(mu);
    }

    let mut triplets = TripletList::new(n_free, n_free);
    let mut rhs = vec![0.0; n_free];
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) == Label::Exterior {
            continue;
        }
        let verts = mesh.triangle(t);
        let ke = crate::assembly_local::element_stiffness(&mesh.triangle_coords(t));
        for i in 0..3 {
            let Some(fi) = free[verts[i]] else { continue };
            for j in 0..3 {
                if let Some(fj) = free[verts[j]] {
                    triplets.push(fi, fj, ke[i][j]);
                } else if let Some(dj) = dirichlet[verts[j]] {
                    rhs[fi] -= ke[i][j] * dj;
                }
            }
        }
    }
    let solver = SymmetricSolver::new(triplets.to_csc())?;
    let sol = solver.solve(&rhs)?;
    for v in 0..n {
        if let Some(fi) = free[v] {
            mu[v] = sol[fi];
        }
    }
    Ok(mu)
}

/// Riesz representative of the (masked) shape derivative in the weighted
/// elasticity inner product b_Γ(U, W) = ∫_Ω 2μ ε(U):ε(W) dx, with U = 0 on
/// ∂Ω and outside Ω.
#[derive(Debug, Clone)]
pub struct RieszGradient {
    /// Nodal representative U, length 2·n_vertices (zeros where constrained).
    pub field: Vec<f64>,
    /// ‖U‖_{L²(Ω)} (vector L² norm), the optimizer's stopping quantity.
    pub l2_norm: f64,
    /// Relative residual ‖B U − dJ‖/‖dJ‖ of the elasticity solve.
    pub residual: f64,
    /// dJ[U] = b(U, U) ≥ 0; −U is a descent direction whenever this is > 0.
    pub pairing: f64,
}

/// The assembled (and factorized) elasticity operator behind b_Γ. Besides
/// producing the Riesz representative it exposes the bilinear form itself,
/// which the optimizer uses as the L-BFGS inner product.
pub struct RieszOperator {
    free: Vec<Option<usize>>,
    solver: SymmetricSolver,
}

impl RieszOperator {
    pub fn build(mesh: &LabeledMesh, mu: &[f64]) -> Result<Self, ShapeError> {
        let n = mesh.n_vertices();
        assert_eq!(mu.len(), n);

        let mut free: Vec<Option<usize>> = vec![None; n];
        let mut n_free = 0;
        for v in 0..n {
            let info = mesh.vertex_info(v);
            if (info.local_side() || info.nonlocal_side()) && !info.pinned() {
                free[v] = Some(n_free);
                n_free += 1;
            }
        }
        let nf = 2 * n_free;
        let mut triplets = TripletList::new(nf, nf);
        for t in 0..mesh.n_triangles() {
            if mesh.label(t) == Label::Exterior {
                continue;
            }
            let verts = mesh.triangle(t);
            let (grads, area) = p1_gradients(&mesh.triangle_coords(t));
            let mu_bar = (mu[verts[0]] + mu[verts[1]] + mu[verts[2]]) / 3.0;
            let scale = 2.0 * mu_bar * area;
            for w in 0..3 {
                let Some(fw) = free[verts[w]] else { continue };
                for z in 0..3 {
                    let Some(fz) = free[verts[z]] else { continue };
                    let gg = grads[w].dot(&grads[z]);
                    let gw = [grads[w].x, grads[w].y];
                    let gz = [grads[z].x, grads[z].y];
                    for m in 0..2 {
                        for p in 0..2 {
                            let eps = 0.5 * (if m == p { gg } else { 0.0 } + gw[p] * gz[m]);
                            let val = scale * eps;
                            if val != 0.0 {
                                triplets.push(2 * fw + m, 2 * fz + p, val);
                            }
                        }
                    }
                }
            }
        }
        let solver = SymmetricSolver::new(triplets.to_csc())?;
        Ok(RieszOperator { free, solver })
    }

    /// Gathers the free components of a full nodal 2-vector field.
    fn restrict(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), 2 * self.free.len());
        let mut out = vec![0.0; self.solver.n()];
        for (v, fv) in self.free.iter().enumerate() {
            if let Some(fv) = fv {
                out[2 * fv] = field[2 * v];
                out[2 * fv + 1] = field[2 * v + 1];
            }
        }
        out
    }

    /// b_Γ(a, b) for full nodal fields (constrained components ignored).
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let ar = self.restrict(a);
        let br = self.restrict(b);
        let mb = csc_matvec(self.solver.matrix(), &br);
        ar.iter().zip(&mb).map(|(x, y)| x * y).sum()
    }

    /// Solves b_Γ(U, V) = dJ[V] and reports the stopping norm, the solve
    /// residual, and the pairing dJ[U].
    pub fn solve(
        &self,
        mesh: &LabeledMesh,
        derivative: &[f64],
    ) -> Result<RieszGradient, ShapeError> {
        let n = mesh.n_vertices();
        assert_eq!(self.free.len(), n);
        assert_eq!(derivative.len(), 2 * n);

        let mut rhs = vec![0.0; self.solver.n()];
        for v in 0..n {
            if let Some(fv) = self.free[v] {
                rhs[2 * fv] = derivative[2 * v];
                rhs[2 * fv + 1] = derivative[2 * v + 1];
            }
        }
        let sol = self.solver.solve(&rhs)?;

        let norm_rhs = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let residual = if norm_rhs == 0.0 {
            0.0
        } else {
            let bu = csc_matvec(self.solver.matrix(), &sol);
            bu.iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / norm_rhs
        };
        let pairing: f64 = sol.iter().zip(&rhs).map(|(u, d)| u * d).sum();

        let mut field = vec![0.0; 2 * n];
        for v in 0..n {
            if let Some(fv) = self.free[v] {
                field[2 * v] = sol[2 * fv];
                field[2 * v + 1] = sol[2 * fv + 1];
            }
        }

        // ‖U‖²_{L²(Ω)} via element mass matrices, componentwise.
        let mut l2_sq = 0.0;
        for t in 0..mesh.n_triangles() {
            if mesh.label(t) == Label::Exterior {
                continue;
            }
            let verts = mesh.triangle(t);
            let mass = element_mass(mesh.area(t));
            for m in 0..2 {
                let vals = [
                    field[2 * verts[0] + m],
                    field[2 * verts[1] + m],
                    field[2 * verts[2] + m],
                ];
                for i in 0..3 {
                    for j in 0..3 {
                        l2_sq += vals[i] * mass[i][j] * vals[j];
                    }
                }
            }
        }

        Ok(RieszGradient {
            field,
            l2_norm: l2_sq.sqrt(),
            residual,
            pairing,
        })
    }
}

pub fn riesz_gradient(
    mesh: &LabeledMesh,
    mu: &[f64],
    derivative: &[f64],
) -> Result<RieszGradient, ShapeError> {
    RieszOperator::build(mesh, mu)?.solve(mesh, derivative)
}

/// Deterministic near-interface probe velocity for derivative checks: a
/// Gaussian bump of width `sigma`, centered at a seeded random angle on the
/// circle that best matches Γ (interface-vertex centroid and mean radius),
/// pointing in a seeded random constant direction, and zeroed on every
/// pinned vertex so it is an admissible deformation field.
pub fn interface_bump_velocity(
    mesh: &LabeledMesh,
    seed: u64,
    sigma: f64,
) -> Result<Vec<Vec2>, ShapeError> {
    use rand::{Rng, SeedableRng};
    let interface = mesh.derive_interface()?;
    let ids = interface.vertex_ids();
    let n = ids.len() as f64;
    let mut c = Vec2::zeros();
    for &v in &ids {
        c += mesh.vertex(v);
    }
    c /= n;
    let r = ids.iter().map(|&v| (mesh.vertex(v) - c).norm()).sum::<f64>() / n;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let center = c + r * Vec2::new(theta.cos(), theta.sin());
    let dir = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Ok((0..mesh.n_vertices())
        .map(|v| {
            if mesh.vertex_info(v).pinned() {
                return Vec2::zeros();
            }
            let d = mesh.vertex(v) - center;
            let w = (-d.norm_squared() / (sigma * sigma)).exp();
            if w < 1e-8 {
                Vec2::zeros()
            } else {
                w * dir
            }
        })
        .collect())
}

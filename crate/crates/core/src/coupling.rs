//! The coupled local/nonlocal linear system: monolithic assembly and
//! solution, the associated energy, and the two subdomain-iteration
//! variants with convergence-rate diagnostics.
//!
//! Free coefficients are ordered by [`DofMap`]: local dofs first
//! (`[0, n_local)`), nonlocal dofs after (`[n_local, n_free)`), which gives
//! the monolithic matrix the 2×2 block structure
//!
//! ```text
//! [ A_ll   −Cᵀ  ] [u_l ]   [F_l ]
//! [ −C     A_nn ] [u_nl] = [F_nl]
//! ```
//!
//! with `A_ll` = Laplace + local cross mass, `A_nn` = difference + nonlocal
//! cross mass + absorption, and `C` the rectangular coupling block.

use crate::assembly_local::{assemble_laplace, assemble_load};
use crate::assembly_nonlocal::{NonlocalBlocks, PairRule};
use crate::dofs::DofMap;
use crate::fields::{BrokenField, SourceTerm};
use crate::kernels::Kernel;
use crate::mesh::LabeledMesh;
use crate::quad::TriangleRule;
use crate::sparse::{csc_matvec, csc_matvec_transpose, SolveError, SymmetricSolver, TripletList};
use nalgebra_sparse::CscMatrix;

/// All blocks of the coupled problem for one mesh/kernel/source triple.
#[derive(Debug, Clone)]
pub struct LtnBlocks {
    pub laplace: TripletList,
    pub nonlocal: NonlocalBlocks,
    pub load: Vec<f64>,
    pub n_local: usize,
    pub n_free: usize,
}

impl LtnBlocks {
    pub fn assemble(
        mesh: &LabeledMesh,
        kernel: &dyn Kernel,
        source: &dyn SourceTerm,
        map: &DofMap,
        pairs: &[(usize, usize)],
        pair_rule: &PairRule,
        load_rule: &TriangleRule,
    ) -> LtnBlocks {
        LtnBlocks {
            laplace: assemble_laplace(mesh, map),
            nonlocal: NonlocalBlocks::assemble(mesh, kernel, pairs, map, pair_rule),
            load: assemble_load(mesh, source, map, load_rule),
            n_local: map.n_local_free(),
            n_free: map.n_free(),
        }
    }

    /// The monolithic matrix (all four blocks merged).
    pub fn full_matrix(&self) -> TripletList {
        let mut total = self.laplace.clone();
        total.merge(&self.nonlocal.full_form());
        total
    }

    /// The three distinct blocks of the 2×2 structure, each over its own
    /// index window: (A_ll, A_nn, C) with C of shape n_nonlocal × n_local.
    pub fn split_blocks(&self) -> (TripletList, TripletList, TripletList) {
        let l = self.n_local;
        let nn = self.n_free - l;
        let mut a_ll = self.laplace.restricted(0, 0, l, l);
        a_ll.merge(&self.nonlocal.cross.m_cross_l.restricted(0, 0, l, l));
        let mut a_nn = self.nonlocal.difference.restricted(l, l, nn, nn);
        a_nn.merge(&self.nonlocal.cross.m_cross_nl.restricted(l, l, nn, nn));
        a_nn.merge(&self.nonlocal.absorption.restricted(l, l, nn, nn));
        let c = self.nonlocal.cross.c_nl_l.restricted(l, 0, nn, l);
        (a_ll, a_nn, c)
    }
}

/// Factorized monolithic system. One factorization serves the state solve,
/// the adjoint solve, energy evaluations, and residual checks.
pub struct LtnSystem {
    solver: SymmetricSolver,
    pub load: Vec<f64>,
}

impl LtnSystem {
    pub fn new(blocks: &LtnBlocks) -> Result<LtnSystem, SolveError> {
        let solver = SymmetricSolver::new(blocks.full_matrix().to_csc())?;
        Ok(LtnSystem {
            solver,
            load: blocks.load.clone(),
        })
    }

    pub fn matrix(&self) -> &CscMatrix<f64> {
        self.solver.matrix()
    }

    pub fn n_free(&self) -> usize {
        self.load.len()
    }

    pub fn solve_state(&self) -> Result<BrokenField, SolveError> {
        Ok(BrokenField::from_free(self.solver.solve(&self.load)?))
    }

    /// Solves the adjoint equation a(w, p) = −∫ (u − ū) w dx given the
    /// tracking residual r_i = ∫ (u − ū) φ_i dx. The form is symmetric, so
    /// the same factorization applies.
    pub fn solve_adjoint(&self, tracking_residual: &[f64]) -> Result<BrokenField, SolveError> {
        let neg: Vec<f64> = tracking_residual.iter().map(|r| -r).collect();
        Ok(BrokenField::from_free(self.solver.solve(&neg)?))
    }

    /// E(v) = ½ a(v, v) − F(v) at the given free coefficients.
    pub fn energy(&self, free: &[f64]) -> f64 {
        let av = csc_matvec(self.matrix(), free);
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..free.len() {
            quad += free[i] * av[i];
            lin += self.load[i] * free[i];
        }
        0.5 * quad - lin
    }

    /// ‖F − A v‖₂ / ‖F‖₂.
    pub fn relative_residual(&self, free: &[f64]) -> f64 {
        self.solver.residual(free, &self.load)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchwarzMode {
    /// Gauss–Seidel flavour: the nonlocal sweep sees the fresh local iterate.
    Multiplicative,
    /// Jacobi flavour: both sweeps read the previous iterate.
    Additive,
}

#[derive(Debug, Clone)]
pub struct SchwarzReport {
    pub mode: SchwarzMode,
    /// Relative monolithic residual after each sweep.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Fitted per-sweep contraction factor ρ of the model r_k ≈ C ρᵏ.
    pub rate: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    pub solution: BrokenField,
}

/// Least-squares fit of ln r_k = ln C + k ln ρ over the residuals above the
/// numerical floor; returns (ρ, R²). With fewer than two usable points the
/// iteration left nothing to fit and (0, 1) is returned.
pub fn fit_geometric_rate(residuals: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = residuals
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > 1e-13)
        .map(|(k, &r)| (k as f64, r.ln()))
        .collect();
    if pts.len() < 2 {
        return (0.0, 1.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let fit = my + slope * (p.0 - mx);
            (p.1 - fit) * (p.1 - fit)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope.exp(), r2)
}

/// Runs the subdomain iteration until the monolithic relative residual
/// drops below `tol` or `max_sweeps` is reached, starting from zero.
pub fn schwarz_solve(
    blocks: &LtnBlocks,
    mode: SchwarzMode,
    tol: f64,
    max_sweeps: usize,
) -> Result<SchwarzReport, SolveError> {
    let l = blocks.n_local;
    let n = blocks.n_free;
    let (a_ll, a_nn, c) = blocks.split_blocks();
    let solver_ll = SymmetricSolver::new(a_ll.to_csc())?;
    let solver_nn = SymmetricSolver::new(a_nn.to_csc())?;
    let c = c.to_csc();
    let full = blocks.full_matrix().to_csc();

    let f_l = &blocks.load[..l];
    let f_nl = &blocks.load[l..];
    let norm_f = blocks.load.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut u_l = vec![0.0; l];
    let mut u_nl = vec![0.0; n - l];
    let mut residuals = Vec::new();
    let mut converged = norm_f == 0.0;

    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        match mode {
            SchwarzMode::Multiplicative => {
                let ct_unl = csc_matvec_transpose(&c, &u_nl);
                let rhs_l: Vec<f64> = f_l.iter().zip(&ct_unl).map(|(f, c)| f + c).collect();
                u_l = solver_ll.solve(&rhs_l)?;
                let c_ul = csc_matvec(&c, &u_l);
                let rhs_nl: Vec<f64> = f_nl.iter().zip(&c_ul).map(|(f, c)| f + c).collect();
                u_nl = solver_nn.solve(&rhs_nl)?;
            }
            SchwarzMode::Additive => {
                let ct_unl = csc_matvec_transpose(&c, &u_nl);
                let rhs_l: Vec<f64> = f_l.iter().zip(&ct_unl).map(|(f, c)| f + c).collect();
                let c_ul = csc_matvec(&c, &u_l);
                let rhs_nl: Vec<f64> = f_nl.iter().zip(&c_ul).map(|(f, c)| f + c).collect();
                u_l = solver_ll.solve(&rhs_l)?;
                u_nl = solver_nn.solve(&rhs_nl)?;
            }
        }
        let mut u = Vec::with_capacity(n);
        u.extend_from_slice(&u_l);
        u.extend_from_slice(&u_nl);
        let au = csc_matvec(&full, &u);
        let r = blocks
            .load
            .iter()
            .zip(&au)
            .map(|(f, a)| (f - a) * (f - a))
            .sum::<f64>()
            .sqrt()
            / norm_f;
        residuals.push(r);
        if r <= tol {
            converged = true;
        }
    }

    let (rate, r_squared) = fit_geometric_rate(&residuals);
    let mut free = Vec::with_capacity(n);
    free.extend_from_slice(&u_l);
    free.extend_from_slice(&u_nl);
    Ok(SchwarzReport {
        mode,
        iterations: residuals.len(),
        converged,
        rate,
        r_squared,
        residuals,
        solution: BrokenField::from_free(free),
    })
}

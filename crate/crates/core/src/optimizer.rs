//! Outer shape-optimization loop: L-BFGS directions in the b_Γ inner
//! product with a curvature safeguard, Armijo backtracking with
//! mesh-validity rejection, stopping tests, iteration history, and JSON
//! checkpoints supporting manual remesh/restart.

use std::cell::RefCell;
use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly_local::assemble_tracking_residual;
use crate::assembly_nonlocal::PairRule;
use crate::coupling::{LtnBlocks, LtnSystem};
use crate::dofs::DofMap;
use crate::fields::SourceTerm;
use crate::geometry::{point_segment_distance, Vec2};
use crate::kernels::Kernel;
use crate::mesh::{InterfaceCurve, Label, LabeledMesh, MeshError};
use crate::quad::TriangleRule;
use crate::shape::{self, RieszOperator, ShapeError};
use crate::sparse::SolveError;

/// Parameters of the optimization loop. Defaults follow the reference
/// experiments: ν = 10⁻³, tol = 5·10⁻⁵ on ‖∇J‖_{L²}, at most 25 iterations,
/// Armijo constant c = 10⁻⁴, backtracking shrink τ = 1/2, memory 5,
/// μ ∈ [0, 1].
#[derive(Debug, Clone)]
pub struct OptConfig {
    /// Perimeter regularization weight ν.
    pub nu: f64,
    /// Interaction horizon δ.
    pub delta: f64,
    /// Stop when ‖∇J^red‖_{L²(Ω)} drops below this.
    pub tol: f64,
    /// Maximum number of accepted steps.
    pub maxiter: usize,
    /// Armijo sufficient-decrease constant c.
    pub armijo_c: f64,
    /// Backtracking shrink factor τ.
    pub tau: f64,
    /// L-BFGS memory length m.
    pub memory: usize,
    /// Elasticity weight on the outer boundary ∂Ω.
    pub mu_min: f64,
    /// Elasticity weight on the interface Γ.
    pub mu_max: f64,
    /// Line-search underflow bound; trials below it raise `StepFailure`.
    pub alpha_min: f64,
    /// Extrapolation tolerance when interpolating ū from the data mesh.
    pub interp_max_dist: f64,
    /// Quadrature for the nonlocal double integrals.
    pub pair_rule: PairRule,
    /// Quadrature for the load / local integrals.
    pub load_rule: TriangleRule,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            nu: 1e-3,
            delta: 0.1,
            tol: 5e-5,
            maxiter: 25,
            armijo_c: 1e-4,
            tau: 0.5,
            memory: 5,
            mu_min: 0.0,
            mu_max: 1.0,
            alpha_min: 1e-12,
            interp_max_dist: 0.2,
            pair_rule: PairRule::default(),
            load_rule: TriangleRule::degree5(),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |m: &str| Err(OptError::BadConfig(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(0.0 <= self.mu_min && self.mu_min <= self.mu_max) || !(self.mu_max > 0.0) {
            return bad("mu bounds must satisfy 0 <= mu_min <= mu_max, mu_max > 0");
        }
        if !(self.nu >= 0.0) {
            return bad("nu must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid optimizer configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(
        "restart interface mismatch: Hausdorff distance {hausdorff:.6} exceeds \
         2·max edge = {threshold:.6}"
    )]
    InterfaceMismatch { hausdorff: f64, threshold: f64 },
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    CheckpointFormat(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),
}

/// Fixed tracking data ū: a nodal P1 field on its own (fixed) mesh,
/// re-interpolated onto every deformed optimization mesh.
#[derive(Debug, Clone)]
pub struct TrackingData {
    pub mesh: LabeledMesh,
    pub values: Vec<f64>,
}

impl TrackingData {
    pub fn new(mesh: LabeledMesh, values: Vec<f64>) -> TrackingData {
        assert_eq!(values.len(), mesh.n_vertices());
        TrackingData { mesh, values }
    }

    pub fn interpolate_onto(
        &self,
        target: &LabeledMesh,
        max_dist: f64,
    ) -> Result<Vec<f64>, MeshError> {
        self.mesh.interpolate(&self.values, target.vertices(), max_dist)
    }
}

// ---------------------------------------------------------------------------
// L-BFGS memory and two-loop recursion
// ---------------------------------------------------------------------------

/// Curvature-guarded limited memory: pairs (s = α·d step field,
/// y = gradient difference). The inner product is supplied at every call so
/// the memory can follow the mesh-dependent metric b_Γ.
pub struct LbfgsMemory {
    m: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

/// Which formula produced the search direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirectionKind {
    /// Two-loop recursion over a nonempty memory.
    Lbfgs,
    /// Negative gradient (empty memory or descent fallback).
    Steepest,
    /// No step taken (stopping record).
    None,
}

impl std::fmt::Display for DirectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DirectionKind::Lbfgs => write!(f, "lbfgs"),
            DirectionKind::Steepest => write!(f, "steepest"),
            DirectionKind::None => write!(f, "none"),
        }
    }
}

impl LbfgsMemory {
    pub fn new(m: usize) -> LbfgsMemory {
        LbfgsMemory {
            m,
            pairs: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Drops all stored pairs (used on remesh/restart: the fields live on a
    /// different mesh).
    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores a pair if it satisfies the curvature condition ⟨s, y⟩ > 0 in
    /// the supplied inner product; returns whether it was accepted.
    pub fn push(
        &mut self,
        s: Vec<f64>,
        y: Vec<f64>,
        inner: &dyn Fn(&[f64], &[f64]) -> f64,
    ) -> bool {
        if self.m == 0 || !(inner(&s, &y) > 0.0) {
            return false;
        }
        self.pairs.push_back((s, y));
        while self.pairs.len() > self.m {
            self.pairs.pop_front();
        }
        true
    }

    /// Two-loop recursion in the supplied inner product. Pairs violating the
    /// curvature condition under the *current* inner product are pruned
    /// first. Empty memory yields exactly −gradient; if the recursion ever
    /// failed to produce descent (⟨d, g⟩ < 0) the steepest-descent fallback
    /// is returned instead.
    pub fn direction(
        &mut self,
        gradient: &[f64],
        inner: &dyn Fn(&[f64], &[f64]) -> f64,
    ) -> (Vec<f64>, DirectionKind) {
        self.pairs.retain(|(s, y)| inner(s, y) > 0.0);
        if self.pairs.is_empty() {
            return (gradient.iter().map(|g| -g).collect(), DirectionKind::Steepest);
        }

        let k = self.pairs.len();
        let mut q = gradient.to_vec();
        let mut alphas = vec![0.0; k];
        let mut rhos = vec![0.0; k];
        for i in (0..k).rev() {
            let (s, y) = &self.pairs[i];
            let rho = 1.0 / inner(y, s);
            let alpha = rho * inner(s, &q);
            for (qj, yj) in q.iter_mut().zip(y) {
                *qj -= alpha * yj;
            }
            alphas[i] = alpha;
            rhos[i] = rho;
        }
        let (s_new, y_new) = self.pairs.back().expect("nonempty");
        let gamma = inner(s_new, y_new) / inner(y_new, y_new);
        let mut r: Vec<f64> = q.iter().map(|qj| gamma * qj).collect();
        for i in 0..k {
            let (s, y) = &self.pairs[i];
            let beta = rhos[i] * inner(y, &r);
            let coeff = alphas[i] - beta;
            for (rj, sj) in r.iter_mut().zip(s) {
                *rj += coeff * sj;
            }
        }
        let direction: Vec<f64> = r.iter().map(|x| -x).collect();
        if inner(&direction, gradient) < 0.0 {
            (direction, DirectionKind::Lbfgs)
        } else {
            (gradient.iter().map(|g| -g).collect(), DirectionKind::Steepest)
        }
    }
}

// ---------------------------------------------------------------------------
// Armijo line search
// ---------------------------------------------------------------------------

/// The Armijo backtracking search failed: every trial down to `alpha_min`
/// was either an invalid deformation or violated sufficient decrease.
#[derive(Debug, Clone, Error)]
#[error("line search underflow below {alpha_min:.3e} after {trials} trials")]
pub struct StepFailure {
    pub alpha_min: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub objective: f64,
    pub trials: usize,
}

/// Backtracks α = α₀·τ^j until `phi(α)` is both defined (valid mesh) and
/// satisfies the Armijo inequality φ(α) ≤ φ(0) + c·α·slope. `slope` must be
/// the (negative) directional derivative at 0.
pub fn line_search(
    mut phi: impl FnMut(f64) -> Option<f64>,
    j0: f64,
    slope: f64,
    alpha0: f64,
    c: f64,
    tau: f64,
    alpha_min: f64,
) -> Result<LineSearchOutcome, StepFailure> {
    debug_assert!(slope < 0.0, "line search requires a descent direction");
    let mut alpha = alpha0;
    let mut trials = 0;
    while alpha >= alpha_min {
        trials += 1;
        if let Some(j) = phi(alpha) {
            if j <= j0 + c * alpha * slope {
                return Ok(LineSearchOutcome {
                    alpha,
                    objective: j,
                    trials,
                });
            }
        }
        alpha *= tau;
    }
    Err(StepFailure { alpha_min, trials })
}

// ---------------------------------------------------------------------------
// The optimization loop
// ---------------------------------------------------------------------------

/// One history row. `objective` and `gradient_norm` are evaluated at the
/// iterate *before* the step of this row is taken; the stopping row records
/// `alpha = 0` and `direction = None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub riesz_residual: f64,
    pub alpha: f64,
    pub trials: usize,
    pub direction: DirectionKind,
    /// Directional derivative D[d] of the step direction (0 in stop rows).
    pub slope: f64,
    pub min_angle_deg: f64,
    pub interface_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    /// ‖∇J^red‖_{L²} < tol.
    GradientBelowTol,
    /// Accepted-step budget exhausted.
    IterationLimit,
    /// Armijo backtracking underflowed; remeshing recommended.
    StepFailure,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::GradientBelowTol => write!(f, "gradient below tolerance"),
            StopReason::IterationLimit => write!(f, "iteration limit"),
            StopReason::StepFailure => write!(f, "line-search step failure"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptHistory {
    pub iterations: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Set when the mesh degraded (min angle < 10°) or a step failed.
    pub remesh_recommended: bool,
}

#[derive(Debug)]
pub struct OptOutcome {
    pub mesh: LabeledMesh,
    pub history: OptHistory,
}

/// Everything the loop evaluates on one mesh.
struct Iterate {
    objective: f64,
    interface_length: f64,
    min_angle_deg: f64,
    derivative: Vec<f64>,
    riesz: shape::RieszGradient,
    op: RieszOperator,
}

fn evaluate_iterate(
    mesh: &LabeledMesh,
    data: &TrackingData,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    cfg: &OptConfig,
) -> Result<Iterate, OptError> {
    let map = DofMap::new(mesh);
    let index = crate::mesh::SpatialIndex::build(mesh, cfg.delta);
    let pairs = mesh.interaction_pairs(&index, cfg.delta);
    let blocks = LtnBlocks::assemble(
        mesh,
        kernel,
        source,
        &map,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
    );
    let system = LtnSystem::new(&blocks)?;
    let u = system.solve_state()?;
    let ubar = data.interpolate_onto(mesh, cfg.interp_max_dist)?;
    let interface = mesh.derive_interface()?;
    let objective = shape::eval_objective(mesh, &map, &u, &ubar, cfg.nu, &interface);

    let residual = assemble_tracking_residual(mesh, &map, &u.free, &ubar);
    let p = system.solve_adjoint(&residual)?;
    let parts = shape::full_shape_derivative(
        mesh,
        &map,
        kernel,
        source,
        &u,
        &p,
        &ubar,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
        cfg.nu,
        &interface,
    );
    let derivative = parts.masked_total(mesh);
    let mu = shape::solve_mu(mesh, cfg.mu_min, cfg.mu_max)?;
    let op = RieszOperator::build(mesh, &mu)?;
    let riesz = op.solve(mesh, &derivative)?;
    let quality = mesh.quality();
    Ok(Iterate {
        objective,
        interface_length: interface.total_length(mesh),
        min_angle_deg: quality.min_angle_deg,
        derivative,
        riesz,
        op,
    })
}

/// Reduced objective alone (used for line-search trials): state solve plus
/// re-interpolated data on the given mesh.
pub fn reduced_objective(
    mesh: &LabeledMesh,
    data: &TrackingData,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    cfg: &OptConfig,
) -> Result<f64, OptError> {
    let map = DofMap::new(mesh);
    let index = crate::mesh::SpatialIndex::build(mesh, cfg.delta);
    let pairs = mesh.interaction_pairs(&index, cfg.delta);
    let blocks = LtnBlocks::assemble(
        mesh,
        kernel,
        source,
        &map,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
    );
    let system = LtnSystem::new(&blocks)?;
    let u = system.solve_state()?;
    let ubar = data.interpolate_onto(mesh, cfg.interp_max_dist)?;
    let interface = mesh.derive_interface()?;
    Ok(shape::eval_objective(mesh, &map, &u, &ubar, cfg.nu, &interface))
}

/// Runs the full loop: per iteration interpolate ū, solve state and adjoint,
/// assemble and mask the shape derivative, solve for μ, represent the
/// gradient in b_Γ, take an L-BFGS / steepest-descent step through the
/// Armijo search, and deform the mesh. Stops on the gradient test, the
/// iteration budget, or a failed line search (recorded, not an `Err`).
pub fn optimize(
    initial: &LabeledMesh,
    data: &TrackingData,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    cfg: &OptConfig,
) -> Result<OptOutcome, OptError> {
    optimize_observed(initial, data, kernel, source, cfg, |_, _, _| {})
}

/// `optimize` with an iterate observer: called once per visited iterate
/// (the stopping iterate included) with the iterate index, the current
/// mesh, and the Riesz-represented shape gradient — the hook the CLI uses
/// to write per-iteration output without re-solving.
pub fn optimize_observed(
    initial: &LabeledMesh,
    data: &TrackingData,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    cfg: &OptConfig,
    mut observer: impl FnMut(usize, &LabeledMesh, &shape::RieszGradient),
) -> Result<OptOutcome, OptError> {
    cfg.validate()?;
    let mut mesh = initial.clone();
    let mut memory = LbfgsMemory::new(cfg.memory);
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut remesh_recommended = false;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (s = α·d, previous gradient field)

    loop {
        let k = iterations.len();
        let it = evaluate_iterate(&mesh, data, kernel, source, cfg)?;
        observer(k, &mesh, &it.riesz);
        if it.min_angle_deg < 10.0 {
            remesh_recommended = true;
        }

        // Fold the previous accepted step into the memory under the current
        // metric.
        if let Some((s, g_prev)) = prev.take() {
            let y: Vec<f64> = it
                .riesz
                .field
                .iter()
                .zip(&g_prev)
                .map(|(a, b)| a - b)
                .collect();
            memory.push(s, y, &|a, b| it.op.inner(a, b));
        }

        let stop_row = |trials: usize| IterationRecord {
            iteration: k,
            objective: it.objective,
            gradient_norm: it.riesz.l2_norm,
            riesz_residual: it.riesz.residual,
            alpha: 0.0,
            trials,
            direction: DirectionKind::None,
            slope: 0.0,
            min_angle_deg: it.min_angle_deg,
            interface_length: it.interface_length,
        };

        if it.riesz.l2_norm < cfg.tol {
            iterations.push(stop_row(0));
            return Ok(OptOutcome {
                mesh,
                history: OptHistory {
                    iterations,
                    stop: StopReason::GradientBelowTol,
                    remesh_recommended,
                },
            });
        }
        if k >= cfg.maxiter {
            iterations.push(stop_row(0));
            return Ok(OptOutcome {
                mesh,
                history: OptHistory {
                    iterations,
                    stop: StopReason::IterationLimit,
                    remesh_recommended,
                },
            });
        }

        // Direction: L-BFGS with the b_Γ inner product, with duality-pairing
        // descent check against the assembled derivative.
        let inner = |a: &[f64], b: &[f64]| it.op.inner(a, b);
        let (mut dir, mut kind) = memory.direction(&it.riesz.field, &inner);
        let mut slope: f64 = it.derivative.iter().zip(&dir).map(|(d, v)| d * v).sum();
        if !(slope < 0.0) {
            dir = it.riesz.field.iter().map(|g| -g).collect();
            kind = DirectionKind::Steepest;
            slope = -it.riesz.pairing;
        }

        let dir_vec2: Vec<Vec2> = dir
            .chunks_exact(2)
            .map(|c| Vec2::new(c[0], c[1]))
            .collect();
        let d_inf = dir_vec2.iter().map(|v| v.norm()).fold(0.0_f64, f64::max);
        let alpha0 = (0.5 * mesh.min_edge_length() / d_inf).min(1.0);

        // Line-search trials: deformation failure rejects the trial; solver
        // failure on a *valid* trial mesh is a genuine error and propagates.
        let trial_error: RefCell<Option<OptError>> = RefCell::new(None);
        let phi = |alpha: f64| -> Option<f64> {
            if trial_error.borrow().is_some() {
                return None;
            }
            let trial = mesh.deform(&dir_vec2, alpha).ok()?;
            match reduced_objective(&trial, data, kernel, source, cfg) {
                Ok(j) => Some(j),
                Err(e) => {
                    *trial_error.borrow_mut() = Some(e);
                    None
                }
            }
        };
        let search = line_search(
            phi,
            it.objective,
            slope,
            alpha0,
            cfg.armijo_c,
            cfg.tau,
            cfg.alpha_min,
        );
        if let Some(e) = trial_error.into_inner() {
            return Err(e);
        }

        match search {
            Ok(out) => {
                iterations.push(IterationRecord {
                    iteration: k,
                    objective: it.objective,
                    gradient_norm: it.riesz.l2_norm,
                    riesz_residual: it.riesz.residual,
                    alpha: out.alpha,
                    trials: out.trials,
                    direction: kind,
                    slope,
                    min_angle_deg: it.min_angle_deg,
                    interface_length: it.interface_length,
                });
                mesh = mesh.deform(&dir_vec2, out.alpha)?;
                let s: Vec<f64> = dir.iter().map(|d| d * out.alpha).collect();
                prev = Some((s, it.riesz.field.clone()));
            }
            Err(sf) => {
                remesh_recommended = true;
                iterations.push(stop_row(sf.trials));
                return Ok(OptOutcome {
                    mesh,
                    history: OptHistory {
                        iterations,
                        stop: StopReason::StepFailure,
                        remesh_recommended,
                    },
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint / restart
// ---------------------------------------------------------------------------

const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON container with the mesh, iterate count, history, and the
/// run's RNG seed. L-BFGS memory is deliberately not stored: a restart
/// always begins with cleared memory (the fields may live on a new mesh).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iterate: usize,
    pub rng_seed: u64,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub labels: Vec<Label>,
    pub history: Vec<IterationRecord>,
}

impl Checkpoint {
    pub fn capture(
        mesh: &LabeledMesh,
        iterate: usize,
        history: &[IterationRecord],
        rng_seed: u64,
    ) -> Checkpoint {
        let (vertices, triangles, labels) = mesh.to_raw();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            iterate,
            rng_seed,
            vertices: vertices.iter().map(|v| [v.x, v.y]).collect(),
            triangles,
            labels,
            history: history.to_vec(),
        }
    }

    /// Rebuilds the stored mesh (revalidating it).
    pub fn mesh(&self) -> Result<LabeledMesh, MeshError> {
        LabeledMesh::new(
            self.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect(),
            self.triangles.clone(),
            self.labels.clone(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), OptError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, OptError> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(OptError::CheckpointVersion(ckpt.version));
        }
        Ok(ckpt)
    }
}

/// Symmetric Hausdorff distance between two interface polylines, measured
/// point-to-segment.
fn interface_hausdorff(
    mesh_a: &LabeledMesh,
    curve_a: &InterfaceCurve,
    mesh_b: &LabeledMesh,
    curve_b: &InterfaceCurve,
) -> f64 {
    let directed = |ma: &LabeledMesh, ca: &InterfaceCurve, mb: &LabeledMesh, cb: &InterfaceCurve| {
        ca.vertex_ids()
            .iter()
            .map(|&v| {
                let p = ma.vertex(v);
                cb.edges
                    .iter()
                    .map(|e| point_segment_distance(p, mb.vertex(e.a), mb.vertex(e.b)))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0_f64, f64::max)
    };
    directed(mesh_a, curve_a, mesh_b, curve_b).max(directed(mesh_b, curve_b, mesh_a, curve_a))
}

/// Restart guard: the new mesh's interface must trace the checkpointed one
/// (Hausdorff distance ≤ 2·max interface edge length over both meshes);
/// otherwise the checkpoint does not belong to this geometry.
pub fn verify_restart(old: &LabeledMesh, new: &LabeledMesh) -> Result<(), OptError> {
    let curve_old = old.derive_interface()?;
    let curve_new = new.derive_interface()?;
    let max_edge = |mesh: &LabeledMesh, curve: &InterfaceCurve| {
        curve
            .edges
            .iter()
            .map(|e| (mesh.vertex(e.b) - mesh.vertex(e.a)).norm())
            .fold(0.0_f64, f64::max)
    };
    let threshold = 2.0 * max_edge(old, &curve_old).max(max_edge(new, &curve_new));
    let hausdorff = interface_hausdorff(old, &curve_old, new, &curve_new);
    if hausdorff <= threshold {
        Ok(())
    } else {
        Err(OptError::InterfaceMismatch {
            hausdorff,
            threshold,
        })
    }
}

/// Assembled shape derivative of the reduced objective as an unmasked nodal
/// 2-vector field (length 2·n_vertices): state solve, adjoint solve, and the
/// volume formula, with no interface-patch zeroing. Pairing this field with
/// a velocity gives the directional derivative that difference quotients of
/// `reduced_objective` must reproduce.
pub fn shape_derivative_field(
    mesh: &LabeledMesh,
    data: &TrackingData,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    cfg: &OptConfig,
) -> Result<Vec<f64>, OptError> {
    let map = DofMap::new(mesh);
    let index = crate::mesh::SpatialIndex::build(mesh, cfg.delta);
    let pairs = mesh.interaction_pairs(&index, cfg.delta);
    let blocks = LtnBlocks::assemble(
        mesh,
        kernel,
        source,
        &map,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
    );
    let system = LtnSystem::new(&blocks)?;
    let u = system.solve_state()?;
    let ubar = data.interpolate_onto(mesh, cfg.interp_max_dist)?;
    let interface = mesh.derive_interface()?;
    let residual = assemble_tracking_residual(mesh, &map, &u.free, &ubar);
    let p = system.solve_adjoint(&residual)?;
    let parts = shape::full_shape_derivative(
        mesh,
        &map,
        kernel,
        source,
        &u,
        &p,
        &ubar,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
        cfg.nu,
        &interface,
    );
    Ok(parts.total())
}

/// Convenience for data generation and tests: solve the forward problem on
/// `mesh` and project the broken state to continuous nodal values.
pub fn solve_nodal_state(
    mesh: &LabeledMesh,
    kernel: &dyn Kernel,
    source: &dyn SourceTerm,
    cfg: &OptConfig,
) -> Result<Vec<f64>, OptError> {
    let map = DofMap::new(mesh);
    let index = crate::mesh::SpatialIndex::build(mesh, cfg.delta);
    let pairs = mesh.interaction_pairs(&index, cfg.delta);
    let blocks = LtnBlocks::assemble(
        mesh,
        kernel,
        source,
        &map,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
    );
    let system = LtnSystem::new(&blocks)?;
    let u = system.solve_state()?;
    Ok(u.nodal_projection(&map))
}

//! `ltnshape` — forward solves, data generation, derivative checks, and
//! interface identification for the energy-based local-to-nonlocal coupling.
//!
//! Exit codes: 0 success, 2 configuration error, 4 line-search step failure,
//! 3 any other runtime failure (solver breakdown, output I/O). The
//! `LTNSHAPE_THREADS` environment variable caps the assembly thread pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ltnshape::config::{ConfigError, RunConfig};
use ltnshape::coupling::{schwarz_solve, LtnBlocks, LtnSystem, SchwarzMode};
use ltnshape::dofs::DofMap;
use ltnshape::fields::SourceTerm;
use ltnshape::io::{self, IoError};
use ltnshape::kernels::NamedKernel;
use ltnshape::mesh::{LabeledMesh, SpatialIndex};
use ltnshape::optimizer::{self, Checkpoint, OptError, StopReason, TrackingData};
use ltnshape::shape;

#[derive(Parser)]
#[command(
    name = "ltnshape",
    version,
    about = "Interface identification under an energy-based local-to-nonlocal coupling",
    after_help = "Exit codes: 0 success, 2 config error, 3 solver failure, 4 step failure.\n\
                  LTNSHAPE_THREADS limits the assembly thread pool."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the forward problem on the data mesh and write the tracking
    /// data u-bar (field file + VTK)
    GenerateData(CommonArgs),
    /// Solve the forward coupled problem and write the broken state
    Solve(SolveArgs),
    /// Run the gradient-based interface identification
    Optimize(OptimizeArgs),
    /// Finite-difference verification of the assembled shape derivative
    CheckDerivative(CheckArgs),
    /// Print mesh, coupling, and configuration facts
    Info(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file
    #[arg(long, short)]
    config: PathBuf,
    /// Override the perimeter regularization weight
    #[arg(long)]
    nu: Option<f64>,
    /// Override the optimizer iteration budget
    #[arg(long)]
    maxiter: Option<usize>,
    /// Override the RNG seed for generated velocity fields
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the kernel name (gamma1 | gamma2)
    #[arg(long)]
    kernel: Option<String>,
    /// Override the interaction horizon
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Coupled-solve strategy
    #[arg(long, value_parser = ["monolithic", "schwarz"], default_value = "monolithic")]
    method: String,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Resume from a checkpoint written by a previous run
    #[arg(long)]
    restart: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated finite-difference step sizes
    #[arg(long, default_value = "1e-3,1e-4,1e-5")]
    steps: String,
    /// Number of random velocity fields (seeds seed, seed+1, ...)
    #[arg(long, default_value_t = 5)]
    fields: usize,
    /// Gaussian bump width of the velocity fields
    #[arg(long, default_value_t = 0.08)]
    sigma: f64,
}

// ---------------------------------------------------------------------------
// Error → exit code
// ---------------------------------------------------------------------------

enum CliError {
    /// Bad configuration or inputs → exit 2.
    Config(String),
    /// Solver or runtime failure → exit 3.
    Runtime(String),
    /// Armijo line search underflowed → exit 4.
    Step(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Step(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Step(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e.to_string())
    }
}

/// MSH/field-file problems while loading inputs are configuration errors;
/// failures while writing outputs are runtime errors. `io_in` marks the
/// former.
fn io_in(e: IoError) -> CliError {
    CliError::Config(e.to_string())
}

fn io_out(e: IoError) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> CliError {
        match e {
            OptError::BadConfig(_)
            | OptError::InterfaceMismatch { .. }
            | OptError::CheckpointFormat(_)
            | OptError::CheckpointVersion(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Shared loading
// ---------------------------------------------------------------------------

struct Loaded {
    cfg: RunConfig,
    mesh: LabeledMesh,
    kernel: NamedKernel,
    source: Box<dyn SourceTerm>,
}

fn apply_overrides(cfg: &mut RunConfig, a: &CommonArgs) {
    if let Some(nu) = a.nu {
        cfg.nu = nu;
    }
    if let Some(m) = a.maxiter {
        cfg.opt.maxiter = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = &a.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(k) = &a.kernel {
        cfg.kernel.name = k.clone();
    }
    if let Some(d) = a.delta {
        cfg.kernel.delta = d;
    }
}

fn load(a: &CommonArgs, need_data: bool) -> Result<Loaded, CliError> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    apply_overrides(&mut cfg, a);
    cfg.validate_schema()?;
    cfg.validate_files(need_data)?;
    let labels = cfg.label_map()?;
    let mesh = io::read_msh(&cfg.mesh, &labels).map_err(io_in)?;
    cfg.validate_against_mesh(&mesh)?;
    let kernel = cfg.kernel.build()?;
    let source = cfg.source.build()?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", cfg.output_dir.display())))?;
    Ok(Loaded {
        cfg,
        mesh,
        kernel,
        source,
    })
}

/// The mesh carrying ū — `data_mesh` when configured, the working mesh
/// otherwise.
fn load_data_mesh(l: &Loaded) -> Result<LabeledMesh, CliError> {
    match &l.cfg.data_mesh {
        Some(p) => {
            let labels = l.cfg.label_map()?;
            io::read_msh(p, &labels).map_err(io_in)
        }
        None => Ok(l.mesh.clone()),
    }
}

fn load_tracking_data(l: &Loaded) -> Result<TrackingData, CliError> {
    let data_mesh = load_data_mesh(l)?;
    let field_path = l
        .cfg
        .data_field
        .as_ref()
        .ok_or_else(|| CliError::Config("data_field is required for this command".into()))?;
    let values = io::read_field(field_path, &data_mesh).map_err(io_in)?;
    Ok(TrackingData::new(data_mesh, values))
}

fn out_path(l: &Loaded, name: &str) -> PathBuf {
    l.cfg.output_dir.join(name)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate_data(a: &CommonArgs) -> Result<(), CliError> {
    let l = load(a, false)?;
    let data_mesh = load_data_mesh(&l)?;
    l.cfg.validate_against_mesh(&data_mesh)?;
    let cfg = l.cfg.opt_config();
    let ubar = optimizer::solve_nodal_state(&data_mesh, &l.kernel, l.source.as_ref(), &cfg)?;

    let field_path = out_path(&l, "ubar.f64");
    io::write_field(&field_path, &data_mesh, &ubar).map_err(io_out)?;
    let vtk_path = out_path(&l, "ubar.vtk");
    io::write_vtk_nodal(&vtk_path, "tracking data", &data_mesh, &[("ubar", &ubar)], &[])
        .map_err(io_out)?;
    let msh_path = out_path(&l, "data_mesh.msh");
    io::write_msh(&msh_path, &data_mesh).map_err(io_out)?;

    println!(
        "generated tracking data on {} vertices ({} triangles)",
        data_mesh.n_vertices(),
        data_mesh.n_triangles()
    );
    println!("  field: {}", field_path.display());
    println!("  vtk:   {}", vtk_path.display());
    println!("  mesh:  {}", msh_path.display());
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<(), CliError> {
    let l = load(&a.common, false)?;
    let cfg = l.cfg.opt_config();
    let map = DofMap::new(&l.mesh);
    let index = SpatialIndex::build(&l.mesh, cfg.delta);
    let pairs = l.mesh.interaction_pairs(&index, cfg.delta);
    let blocks = LtnBlocks::assemble(
        &l.mesh,
        &l.kernel,
        l.source.as_ref(),
        &map,
        &pairs,
        &cfg.pair_rule,
        &cfg.load_rule,
    );

    let u = match a.method.as_str() {
        "monolithic" => {
            let system = LtnSystem::new(&blocks).map_err(|e| CliError::Runtime(e.to_string()))?;
            let u = system
                .solve_state()
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "monolithic solve: {} free dofs, energy {:.9e}, relative residual {:.3e}",
                blocks.n_free,
                system.energy(&u.free),
                system.relative_residual(&u.free)
            );
            u
        }
        _ => {
            let report = schwarz_solve(
                &blocks,
                SchwarzMode::Multiplicative,
                l.cfg.schwarz.tol,
                l.cfg.schwarz.max_sweeps,
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "schwarz solve: {} sweeps, converged={}, rate {:.4}, fit R^2 {:.4}",
                report.iterations, report.converged, report.rate, report.r_squared
            );
            let csv_path = out_path(&l, "schwarz.csv");
            io::write_schwarz_csv(&csv_path, &report).map_err(io_out)?;
            println!("  residuals: {}", csv_path.display());
            if !report.converged {
                return Err(CliError::Runtime(format!(
                    "Schwarz iteration did not reach tol {:.1e} within {} sweeps",
                    l.cfg.schwarz.tol, l.cfg.schwarz.max_sweeps
                )));
            }
            report.solution
        }
    };

    let vtk_path = out_path(&l, "state.vtk");
    io::write_vtk_broken(&vtk_path, "coupled state", &l.mesh, &map, &[("u", &u)])
        .map_err(io_out)?;
    println!("  state: {}", vtk_path.display());
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    let l = load(&a.common, true)?;
    let data = load_tracking_data(&l)?;
    let cfg = l.cfg.opt_config();
    let history_path = out_path(&l, "history.csv");

    // An explicit zero budget writes the header and stops before any solve.
    if cfg.maxiter == 0 {
        io::write_history_csv(&history_path, &[]).map_err(io_out)?;
        println!("maxiter = 0: nothing to do");
        println!("  history: {}", history_path.display());
        return Ok(());
    }

    let initial = match &a.restart {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let mesh = ckpt.mesh().map_err(|e| CliError::Config(e.to_string()))?;
            optimizer::verify_restart(&l.mesh, &mesh)?;
            println!(
                "restarting from {} (iterate {}, seed {})",
                path.display(),
                ckpt.iterate,
                ckpt.rng_seed
            );
            mesh
        }
        None => l.mesh.clone(),
    };

    let out_dir = l.cfg.output_dir.clone();
    let outcome = optimizer::optimize_observed(
        &initial,
        &data,
        &l.kernel,
        l.source.as_ref(),
        &cfg,
        |k, mesh, riesz| {
            let path = out_dir.join(format!("iter_{k:03}.vtk"));
            if let Err(e) = io::write_vtk_nodal(
                &path,
                "iterate",
                mesh,
                &[],
                &[("shape_gradient", &riesz.field)],
            ) {
                eprintln!("warning: could not write {}: {e}", path.display());
            }
        },
    )?;

    io::write_history_csv(&history_path, &outcome.history.iterations).map_err(io_out)?;
    let final_msh = out_path(&l, "final.msh");
    io::write_msh(&final_msh, &outcome.mesh).map_err(io_out)?;
    let ckpt_path = out_path(&l, "checkpoint.json");
    Checkpoint::capture(
        &outcome.mesh,
        outcome.history.iterations.len(),
        &outcome.history.iterations,
        l.cfg.seed,
    )
    .save(&ckpt_path)?;

    // final state on the identified interface
    let final_state =
        optimizer::solve_nodal_state(&outcome.mesh, &l.kernel, l.source.as_ref(), &cfg)?;
    let state_path = out_path(&l, "final_state.vtk");
    io::write_vtk_nodal(
        &state_path,
        "final state",
        &outcome.mesh,
        &[("u", &final_state)],
        &[],
    )
    .map_err(io_out)?;

    let last = outcome.history.iterations.last();
    println!(
        "stopped after {} iterations: {}",
        outcome.history.iterations.len(),
        outcome.history.stop
    );
    if let Some(r) = last {
        println!(
            "  objective {:.9e}, gradient norm {:.3e}",
            r.objective, r.gradient_norm
        );
    }
    if outcome.history.remesh_recommended {
        println!("  note: remeshing is recommended (mesh quality degraded or step failed)");
    }
    println!("  history:    {}", history_path.display());
    println!("  final mesh: {}", final_msh.display());
    println!("  checkpoint: {}", ckpt_path.display());

    if outcome.history.stop == StopReason::StepFailure {
        return Err(CliError::Step(
            "line search could not find an acceptable step".into(),
        ));
    }
    Ok(())
}

fn cmd_check_derivative(a: &CheckArgs) -> Result<(), CliError> {
    let l = load(&a.common, true)?;
    let data = load_tracking_data(&l)?;
    let cfg = l.cfg.opt_config();

    let mut steps = Vec::new();
    for tok in a.steps.split(',') {
        let t: f64 = tok
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad step size '{}'", tok.trim())))?;
        if !(t > 0.0) {
            return Err(CliError::Config(format!("step size {t} must be positive")));
        }
        steps.push(t);
    }
    if a.fields == 0 {
        return Err(CliError::Config("need at least one velocity field".into()));
    }

    let derivative = optimizer::shape_derivative_field(
        &l.mesh,
        &data,
        &l.kernel,
        l.source.as_ref(),
        &cfg,
    )?;
    let j0 = optimizer::reduced_objective(&l.mesh, &data, &l.kernel, l.source.as_ref(), &cfg)?;

    let mut rows = Vec::new();
    println!(
        "derivative check: {} fields x {} steps, kernel {}, J = {:.9e}",
        a.fields,
        steps.len(),
        l.kernel.name(),
        j0
    );
    for i in 0..a.fields {
        let seed = l.cfg.seed + i as u64;
        let velocity = shape::interface_bump_velocity(&l.mesh, seed, a.sigma)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let assembled: f64 = velocity
            .iter()
            .enumerate()
            .map(|(v, w)| derivative[2 * v] * w.x + derivative[2 * v + 1] * w.y)
            .sum();
        for &t in &steps {
            let deformed = l
                .mesh
                .deform(&velocity, t)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let jt =
                optimizer::reduced_objective(&deformed, &data, &l.kernel, l.source.as_ref(), &cfg)?;
            let quotient = (jt - j0) / t;
            let rel = if assembled != 0.0 {
                ((quotient - assembled) / assembled).abs()
            } else {
                quotient.abs()
            };
            println!(
                "  seed {seed}  t={t:.1e}  assembled {assembled:+.6e}  quotient {quotient:+.6e}  rel {rel:.3e}"
            );
            rows.push(vec![
                seed.to_string(),
                l.kernel.name().to_string(),
                format!("{t:.17e}"),
                format!("{assembled:.17e}"),
                format!("{quotient:.17e}"),
                format!("{rel:.17e}"),
            ]);
        }
    }
    let csv_path = out_path(&l, "fd_report.csv");
    io::write_csv(
        &csv_path,
        &["seed", "kernel", "t", "assembled", "quotient", "rel_error"],
        &rows,
    )
    .map_err(io_out)?;
    println!("  report: {}", csv_path.display());
    Ok(())
}

fn cmd_info(a: &CommonArgs) -> Result<(), CliError> {
    let l = load(a, false)?;
    let mesh = &l.mesh;
    let map = DofMap::new(mesh);
    let quality = mesh.quality();
    let mut counts = [0usize; 3];
    for t in 0..mesh.n_triangles() {
        counts[mesh.label(t) as usize] += 1;
    }
    println!("mesh: {}", l.cfg.mesh.display());
    println!("  vertices:  {}", mesh.n_vertices());
    println!(
        "  triangles: {} (local {}, nonlocal {}, exterior {})",
        mesh.n_triangles(),
        counts[0],
        counts[1],
        counts[2]
    );
    println!(
        "  free dofs: {} (local {}, nonlocal {})",
        map.n_free(),
        map.n_local_free(),
        map.n_free() - map.n_local_free()
    );
    match mesh.derive_interface() {
        Ok(interface) => println!(
            "  interface: {} edges in {} loop(s), length {:.6}, mean edge {:.6}",
            interface.edges.len(),
            interface.loops.len(),
            interface.total_length(mesh),
            interface.mean_edge_length(mesh)
        ),
        Err(e) => println!("  interface: none ({e})"),
    }
    println!(
        "  quality:   min angle {:.2} deg, min area ratio {:.3e}",
        quality.min_angle_deg, quality.min_area_ratio
    );
    println!("  min edge:  {:.6}", mesh.min_edge_length());
    println!(
        "kernel: {} (delta = {}), nu = {}, seed = {}, deterministic = {}",
        l.kernel.name(),
        l.cfg.kernel.delta,
        l.cfg.nu,
        l.cfg.seed,
        l.cfg.deterministic
    );
    let mut lo = ltnshape::geometry::Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = ltnshape::geometry::Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in mesh.vertices() {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let report = ltnshape::kernels::validate_kernel(&l.kernel, (lo, hi), 2000, l.cfg.seed);
    println!(
        "  kernel admissible: {} (K1-K4 sampled)",
        report.is_admissible()
    );
    Ok(())
}

// ---------------------------------------------------------------------------

fn init_thread_pool() {
    if let Ok(s) = std::env::var("LTNSHAPE_THREADS") {
        if let Ok(n) = s.parse::<usize>() {
            if n > 0 {
                // ignore failure: the pool may already be initialized
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::GenerateData(a) => cmd_generate_data(a),
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Optimize(a) => cmd_optimize(a),
        Cmd::CheckDerivative(a) => cmd_check_derivative(a),
        Cmd::Info(a) => cmd_info(a),
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

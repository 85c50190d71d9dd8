//! Black-box tests of the `ltnshape` binary: the full data → solve →
//! optimize → verify pipeline on a small fixture, exit-code conventions,
//! output formats, and run-to-run determinism.

use ltnshape::config::{KernelSpec, RunConfig};
use ltnshape::geometry::Vec2;
use ltnshape::io;
use ltnshape::samples;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ltnshape"))
}

/// Writes a small self-contained problem into `dir`: target-circle data
/// mesh, perturbed initial mesh, and a config pointing at both.
fn write_fixture(dir: &Path) -> PathBuf {
    let center = Vec2::new(0.5, 0.5);
    let data_mesh = samples::square_with_circle(8, 2, center, 0.25);
    let initial = samples::square_with_radial_interface(8, 2, center, |t| {
        0.25 * (1.0 + 0.10 * (2.0 * t).cos())
    });
    io::write_msh(&dir.join("data_mesh.msh"), &data_mesh).unwrap();
    io::write_msh(&dir.join("initial_mesh.msh"), &initial).unwrap();
    let cfg = RunConfig {
        mesh: dir.join("initial_mesh.msh"),
        data_mesh: Some(dir.join("data_mesh.msh")),
        data_field: Some(dir.join("out").join("ubar.f64")),
        kernel: KernelSpec {
            name: "gamma1".to_string(),
            delta: 0.2,
        },
        output_dir: dir.join("out"),
        ..RunConfig::default()
    };
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_exit(out: &Output, code: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{what}: expected exit {code}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn looks_like_vtk(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(
        text.starts_with("# vtk DataFile Version 3.0"),
        "{}: bad VTK header",
        path.display()
    );
    for section in ["POINTS", "CELLS", "CELL_TYPES"] {
        assert!(text.contains(section), "{}: missing {section}", path.display());
    }
}

#[test]
fn the_full_pipeline_runs_and_writes_every_advertised_output() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let cfg_s = config.to_str().unwrap();
    let out_dir = dir.path().join("out");

    // 1. synthesize the measurement from the target geometry
    let out = run(&["generate-data", "--config", cfg_s]);
    assert_exit(&out, 0, "generate-data");
    assert!(out_dir.join("ubar.f64").is_file());
    assert!(out_dir.join("ubar.f64.json").is_file());
    looks_like_vtk(&out_dir.join("ubar.vtk"));

    // 2. forward solve, both strategies; Schwarz logs its sweep history
    let out = run(&["solve", "--config", cfg_s, "--method", "monolithic"]);
    assert_exit(&out, 0, "solve monolithic");
    looks_like_vtk(&out_dir.join("state.vtk"));
    let out = run(&["solve", "--config", cfg_s, "--method", "schwarz"]);
    assert_exit(&out, 0, "solve schwarz");
    let sweeps = std::fs::read_to_string(out_dir.join("schwarz.csv")).unwrap();
    assert!(sweeps.starts_with("sweep,relative_residual\r\n"));
    assert!(sweeps.trim_end().lines().count() > 2, "no sweep rows logged");

    // 3. two optimizer steps: monotone history, checkpoint, final outputs
    let out = run(&["optimize", "--config", cfg_s, "--maxiter", "2"]);
    assert_exit(&out, 0, "optimize");
    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,objective,gradient_norm,riesz_residual,alpha,trials,direction,slope,min_angle_deg,interface_length"
    );
    let objectives: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((2..=3).contains(&objectives.len()), "{} rows", objectives.len());
    for w in objectives.windows(2) {
        assert!(w[1] <= w[0] + 1e-14, "objective rose in history.csv");
    }
    assert!(out_dir.join("final.msh").is_file());
    assert!(out_dir.join("checkpoint.json").is_file());
    looks_like_vtk(&out_dir.join("final_state.vtk"));
    looks_like_vtk(&out_dir.join("iter_000.vtk"));

    // 4. the written mesh is readable and still a valid labeled mesh
    let labels = RunConfig::default().label_map().unwrap();
    let final_mesh = io::read_msh(&out_dir.join("final.msh"), &labels).unwrap();
    assert!(final_mesh.derive_interface().is_ok());

    // 5. derivative check on the same instance writes its report
    let out = run(&[
        "check-derivative",
        "--config",
        cfg_s,
        "--steps",
        "1e-3,1e-4",
        "--fields",
        "2",
    ]);
    assert_exit(&out, 0, "check-derivative");
    let report = std::fs::read_to_string(out_dir.join("fd_report.csv")).unwrap();
    assert!(report.starts_with("seed,kernel,t,assembled,quotient,rel_error\r\n"));
    assert_eq!(report.trim_end().lines().count(), 1 + 2 * 2);

    // 6. info summarizes the configured problem without touching outputs
    let out = run(&["info", "--config", cfg_s]);
    assert_exit(&out, 0, "info");
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for needle in ["vertices", "triangles", "kernel", "admissible"] {
        assert!(text.contains(needle), "info output missing {needle:?}:\n{text}");
    }
}

#[test]
fn a_zero_iteration_budget_writes_only_the_history_header() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let out = run(&["generate-data", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 0, "generate-data");
    let out = run(&[
        "optimize",
        "--config",
        config.to_str().unwrap(),
        "--maxiter",
        "0",
    ]);
    assert_exit(&out, 0, "optimize --maxiter 0");
    let history = std::fs::read_to_string(dir.path().join("out").join("history.csv")).unwrap();
    assert_eq!(history.trim_end().lines().count(), 1, "expected header only");
    assert!(!dir.path().join("out").join("final.msh").exists());
}

#[test]
fn optimize_is_deterministic_across_processes() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cfg_a = write_fixture(dir_a.path());
    let cfg_b = write_fixture(dir_b.path());
    for (cfg, dir) in [(&cfg_a, &dir_a), (&cfg_b, &dir_b)] {
        let out = run(&["generate-data", "--config", cfg.to_str().unwrap()]);
        assert_exit(&out, 0, "generate-data");
        let out = run(&["optimize", "--config", cfg.to_str().unwrap(), "--maxiter", "2"]);
        assert_exit(&out, 0, "optimize");
        let _ = dir;
    }
    let read = |d: &tempfile::TempDir, f: &str| {
        std::fs::read(d.path().join("out").join(f)).unwrap()
    };
    assert_eq!(
        read(&dir_a, "history.csv"),
        read(&dir_b, "history.csv"),
        "history.csv differs between identical runs"
    );
    assert_eq!(
        read(&dir_a, "final.msh"),
        read(&dir_b, "final.msh"),
        "final.msh differs between identical runs"
    );
}

#[test]
fn config_problems_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();

    // missing config file
    let missing = dir.path().join("nope.json");
    let out = run(&["solve", "--config", missing.to_str().unwrap()]);
    assert_exit(&out, 2, "missing config");

    // config that parses but points at a mesh that does not exist
    let config = write_fixture(dir.path());
    std::fs::remove_file(dir.path().join("initial_mesh.msh")).unwrap();
    let out = run(&["solve", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 2, "missing mesh file");

    // malformed JSON
    std::fs::write(&config, "{ not json").unwrap();
    let out = run(&["info", "--config", config.to_str().unwrap()]);
    assert_exit(&out, 2, "malformed JSON");

    // unknown kernel name survives parsing but fails validation
    let dir2 = tempfile::tempdir().unwrap();
    let config2 = write_fixture(dir2.path());
    let out = run(&[
        "solve",
        "--config",
        config2.to_str().unwrap(),
        "--kernel",
        "gamma9",
    ]);
    assert_exit(&out, 2, "unknown kernel");
}

#[test]
fn optimizing_without_generated_data_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    // ubar.f64 is only written by generate-data; optimize must refuse early
    let out = run(&["optimize", "--config", config.to_str().unwrap(), "--maxiter", "1"]);
    assert_exit(&out, 2, "optimize without data field");
}

#[test]
fn the_field_sidecar_binds_data_to_its_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path());
    let cfg_s = config.to_str().unwrap();
    let out = run(&["generate-data", "--config", cfg_s]);
    assert_exit(&out, 0, "generate-data");

    // regenerate the data mesh with a different circle: the stored field no
    // longer matches the mesh hash recorded in its sidecar
    let other = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.2);
    io::write_msh(&dir.path().join("data_mesh.msh"), &other).unwrap();
    let out = run(&["optimize", "--config", cfg_s, "--maxiter", "1"]);
    assert_exit(&out, 2, "stale sidecar");
}

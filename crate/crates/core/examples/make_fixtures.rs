//! Writes the example inputs used by the README quickstart: a data mesh
//! whose interface is the target circle of radius 0.25, a working mesh with
//! a perturbed polygonal interface, and a `config.json` wiring the two
//! together with the default gamma1 kernel.
//!
//! Usage: cargo run --example make_fixtures [-- <directory>]

use ltnshape::config::RunConfig;
use ltnshape::geometry::Vec2;
use ltnshape::io;
use ltnshape::samples;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create fixture directory");

    let center = Vec2::new(0.5, 0.5);
    let data_mesh = samples::square_with_circle(8, 2, center, 0.25);
    let initial = samples::square_with_radial_interface(8, 2, center, |t| {
        0.25 * (1.0 + 0.10 * (2.0 * t).cos())
    });
    io::write_msh(&dir.join("data_mesh.msh"), &data_mesh).expect("write data mesh");
    io::write_msh(&dir.join("initial_mesh.msh"), &initial).expect("write initial mesh");

    let cfg = RunConfig {
        mesh: dir.join("initial_mesh.msh"),
        data_mesh: Some(dir.join("data_mesh.msh")),
        data_field: Some(dir.join("out").join("ubar.f64")),
        kernel: ltnshape::config::KernelSpec {
            name: "gamma1".to_string(),
            delta: 0.2,
        },
        output_dir: dir.join("out"),
        ..RunConfig::default()
    };
    std::fs::write(dir.join("config.json"), cfg.to_json().expect("serialize"))
        .expect("write config");

    println!("fixtures written to {}/", dir.display());
    println!("  data_mesh.msh    target geometry (circle r = 0.25)");
    println!("  initial_mesh.msh perturbed starting interface");
    println!("  config.json      run configuration");
}

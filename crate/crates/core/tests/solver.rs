//! Coupled-system solves: monolithic vs Schwarz, energy structure, and
//! degenerate loads.

mod common;

use ltnshape::assembly_local::assemble_load;
use ltnshape::coupling::{schwarz_solve, LtnBlocks, LtnSystem, SchwarzMode};
use ltnshape::dofs::DofMap;
use ltnshape::fields::{PiecewiseConstant, SourceTerm};
use ltnshape::geometry::Vec2;
use ltnshape::kernels::Gamma1;
use ltnshape::mesh::{LabeledMesh, SpatialIndex};
use ltnshape::quad::TriangleRule;
use ltnshape::samples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assemble(mesh: &LabeledMesh, delta: f64, source: &dyn SourceTerm) -> (DofMap, LtnBlocks) {
    let map = DofMap::new(mesh);
    let kernel = Gamma1::new(delta);
    let index = SpatialIndex::build(mesh, delta);
    let pairs = mesh.interaction_pairs(&index, delta);
    let blocks = LtnBlocks::assemble(
        mesh,
        &kernel,
        source,
        &map,
        &pairs,
        &Default::default(),
        &TriangleRule::degree5(),
    );
    (map, blocks)
}

/// L² norm of the difference of two free-coefficient vectors, through the
/// element mass matrices of both sides.
fn l2_diff(mesh: &LabeledMesh, map: &DofMap, a: &[f64], b: &[f64]) -> f64 {
    use ltnshape::fields::BrokenField;
    let fa = BrokenField::from_free(a.to_vec());
    let fb = BrokenField::from_free(b.to_vec());
    let mut acc = 0.0;
    for t in 0..mesh.n_triangles() {
        if mesh.label(t) == ltnshape::mesh::Label::Exterior {
            continue;
        }
        let side = ltnshape::dofs::Side::of_label(mesh.label(t));
        let verts = mesh.triangle(t);
        let area = mesh.area(t);
        let d: Vec<f64> = verts
            .iter()
            .map(|&v| fa.nodal(map, side, v) - fb.nodal(map, side, v))
            .collect();
        // exact P1 mass integration
        let mass = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                acc += area / 12.0 * mass[i][j] * d[i] * d[j];
            }
        }
    }
    acc.sqrt()
}

#[test]
fn zero_source_gives_zero_state_for_both_methods() {
    let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
    let source = PiecewiseConstant::new(0.0, 0.0);
    let (_map, blocks) = assemble(&mesh, 0.2, &source);

    let system = LtnSystem::new(&blocks).unwrap();
    let u = system.solve_state().unwrap();
    assert!(u.free.iter().all(|&x| x == 0.0));

    let report = schwarz_solve(&blocks, SchwarzMode::Multiplicative, 1e-12, 100).unwrap();
    assert!(report.converged);
    assert!(report.solution.free.iter().all(|&x| x == 0.0));
}

#[test]
fn both_schwarz_modes_converge_to_the_monolithic_solution() {
    let mesh = samples::square_with_circle(10, 2, Vec2::new(0.5, 0.5), 0.25);
    let source = PiecewiseConstant::new(-10.0, 10.0);
    let (map, blocks) = assemble(&mesh, 0.2, &source);
    let system = LtnSystem::new(&blocks).unwrap();
    let mono = system.solve_state().unwrap();

    for mode in [SchwarzMode::Multiplicative, SchwarzMode::Additive] {
        let report = schwarz_solve(&blocks, mode, 1e-13, 400).unwrap();
        assert!(report.converged, "{mode:?} did not converge");
        let dist = l2_diff(&mesh, &map, &report.solution.free, &mono.free);
        assert!(
            dist <= 1e-8,
            "{mode:?} limit is {dist:.2e} from the monolithic solve"
        );
        // residual history decreases strictly until the floor
        for w in report.residuals.windows(2) {
            if w[0] > 1e-12 {
                assert!(w[1] < w[0], "residuals not strictly decreasing: {w:?}");
            }
        }
    }
}

#[test]
fn energy_of_the_solution_is_minimal_among_random_perturbations() {
    let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
    let source = PiecewiseConstant::new(-10.0, 10.0);
    let (_map, blocks) = assemble(&mesh, 0.2, &source);
    let system = LtnSystem::new(&blocks).unwrap();
    let u = system.solve_state().unwrap();
    let e0 = system.energy(&u.free);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let w: Vec<f64> = u
            .free
            .iter()
            .map(|&x| x + rng.gen_range(-0.1..0.1))
            .collect();
        let ew = system.energy(&w);
        assert!(
            ew > e0,
            "perturbed energy {ew:.12e} not above the minimum {e0:.12e}"
        );
    }
}

#[test]
fn adjoint_solve_flips_the_sign_of_the_right_hand_side() {
    // A is symmetric, so solve_adjoint(r) must equal −A⁻¹ r
    let mesh = samples::square_with_circle(6, 2, Vec2::new(0.5, 0.5), 0.25);
    let source = PiecewiseConstant::new(2.0, -1.0);
    let (map, blocks) = assemble(&mesh, 0.2, &source);
    let system = LtnSystem::new(&blocks).unwrap();

    let rhs = assemble_load(&mesh, &source, &map, &TriangleRule::degree5());
    let forward = system.solve_state().unwrap();
    let adjoint = system.solve_adjoint(&rhs).unwrap();
    for (f, a) in forward.free.iter().zip(&adjoint.free) {
        assert!((f + a).abs() <= 1e-12 * f.abs().max(1.0));
    }
}

#[test]
fn monolithic_residual_is_at_machine_precision() {
    let mesh = samples::square_with_circle(8, 2, Vec2::new(0.5, 0.5), 0.25);
    let source = PiecewiseConstant::new(-10.0, 10.0);
    let (_map, blocks) = assemble(&mesh, 0.2, &source);
    let system = LtnSystem::new(&blocks).unwrap();
    let u = system.solve_state().unwrap();
    assert!(system.relative_residual(&u.free) <= 1e-12);
}

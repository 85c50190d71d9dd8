//! Production nonlocal assembly against the dense index-free oracle.

mod common;

use common::{assert_dense_close, dense_nonlocal_oracle, restrict_to_free};
use ltnshape::assembly_nonlocal::{
    assemble_absorption, assemble_cross_blocks, assemble_difference_block, PairRule,
};
use ltnshape::dofs::DofMap;
use ltnshape::geometry::Vec2;
use ltnshape::kernels::{Gamma1, Gamma2, Kernel};
use ltnshape::mesh::{LabeledMesh, SpatialIndex};
use ltnshape::quad::TriangleRule;
use ltnshape::samples;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_all_blocks(mesh: &LabeledMesh, kernel: &dyn Kernel, tol: f64, tag: &str) {
    let map = DofMap::new(mesh);
    let index = SpatialIndex::build(mesh, kernel.delta());
    let pairs = mesh.interaction_pairs(&index, kernel.delta());
    let rule = PairRule::default();

    let diff = assemble_difference_block(mesh, kernel, &pairs, &map, &rule);
    let cross = assemble_cross_blocks(mesh, kernel, &pairs, &map, &rule);
    let absorb = assemble_absorption(mesh, kernel, &pairs, &map, &rule);

    let oracle = dense_nonlocal_oracle(mesh, kernel, &TriangleRule::degree5(), &TriangleRule::degree5());

    assert_dense_close(
        &format!("{tag}: difference"),
        &diff.to_dense(),
        &restrict_to_free(&oracle.difference, &map, true, true),
        tol,
    );
    assert_dense_close(
        &format!("{tag}: c_nl_l"),
        &cross.c_nl_l.to_dense(),
        &restrict_to_free(&oracle.c_nl_l, &map, true, false),
        tol,
    );
    assert_dense_close(
        &format!("{tag}: m_cross_nl"),
        &cross.m_cross_nl.to_dense(),
        &restrict_to_free(&oracle.m_cross_nl, &map, true, true),
        tol,
    );
    assert_dense_close(
        &format!("{tag}: m_cross_l"),
        &cross.m_cross_l.to_dense(),
        &restrict_to_free(&oracle.m_cross_l, &map, false, false),
        tol,
    );
    assert_dense_close(
        &format!("{tag}: absorption"),
        &absorb.to_dense(),
        &restrict_to_free(&oracle.absorption, &map, true, true),
        tol,
    );
}

#[test]
fn every_block_matches_the_dense_oracle_on_random_meshes() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..12 {
        let mesh = samples::random_labeled_mesh(&mut rng, 3);
        assert!(mesh.n_triangles() <= 30, "oracle meshes must stay small");
        let delta = rng.gen_range(0.3..0.9);
        let kernel_pick = case % 2;
        if kernel_pick == 0 {
            check_all_blocks(&mesh, &Gamma1::new(delta), 1e-8, &format!("case {case} gamma1"));
        } else {
            check_all_blocks(&mesh, &Gamma2::new(delta), 1e-8, &format!("case {case} gamma2"));
        }
    }
}

#[test]
fn two_triangle_difference_matches_a_degree10_oracle_when_delta_covers_the_patch() {
    // one square split into two NONLOCAL triangles, horizon covering both:
    // the indicator never truncates, so a higher-order oracle must agree to
    // near machine precision (the smooth parts are low-degree polynomials)
    let mesh = LabeledMesh::new(
        vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        vec![ltnshape::mesh::Label::Nonlocal; 2],
    )
    .unwrap();
    let map = DofMap::unconstrained(&mesh);
    let kernel = Gamma2::new(4.0);
    let index = SpatialIndex::build(&mesh, 4.0);
    let pairs = mesh.interaction_pairs(&index, 4.0);
    let diff = assemble_difference_block(&mesh, &kernel, &pairs, &map, &PairRule::default());
    let oracle = dense_nonlocal_oracle(
        &mesh,
        &kernel,
        &TriangleRule::of_degree(10),
        &TriangleRule::of_degree(10),
    );
    assert_dense_close(
        "two-triangle difference",
        &diff.to_dense(),
        &restrict_to_free(&oracle.difference, &map, true, true),
        1e-10,
    );
}

#[test]
fn enlarging_the_pair_search_radius_changes_nothing() {
    // truncation consistency: pairs gathered with a larger search radius
    // add only interactions the indicator kills
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mesh = samples::random_labeled_mesh(&mut rng, 3);
    let map = DofMap::new(&mesh);
    let kernel = Gamma1::new(0.4);
    let rule = PairRule::default();

    let tight = {
        let index = SpatialIndex::build(&mesh, 0.4);
        mesh.interaction_pairs(&index, 0.4)
    };
    let wide = {
        let index = SpatialIndex::build(&mesh, 2.0);
        mesh.interaction_pairs(&index, 2.0)
    };
    assert!(wide.len() >= tight.len());

    let a = assemble_difference_block(&mesh, &kernel, &tight, &map, &rule).to_dense();
    let b = assemble_difference_block(&mesh, &kernel, &wide, &map, &rule).to_dense();
    let scale = common::max_abs(&a);
    assert!(common::max_abs(&(a - b)) <= 1e-14 * scale);
}

//! Property-based invariants: format round-trips, CSV quoting, kernel
//! symmetry, and admissibility of generated velocity fields.

use ltnshape::config::RunConfig;
use ltnshape::geometry::Vec2;
use ltnshape::io;
use ltnshape::kernels::{Gamma1, Gamma2, Kernel};
use ltnshape::samples;
use ltnshape::shape;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Write → parse → write is the identity on the textual form, and the
    /// parsed mesh carries identical geometry, connectivity, and labels.
    #[test]
    fn msh_roundtrips_random_meshes(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = samples::random_labeled_mesh(&mut rng, 4);
        let labels = RunConfig::default().label_map().unwrap();
        let text = io::format_msh(&mesh);
        let back = io::parse_msh(&text, &labels).unwrap();
        prop_assert_eq!(mesh.n_vertices(), back.n_vertices());
        prop_assert_eq!(mesh.triangles(), back.triangles());
        prop_assert_eq!(mesh.labels(), back.labels());
        for (a, b) in mesh.vertices().iter().zip(back.vertices()) {
            prop_assert!((a - b).norm() <= 1e-15);
        }
        prop_assert_eq!(text, io::format_msh(&back));
    }

    /// Any cell content survives CSV quoting: the formatted document can be
    /// split back into the original cells.
    #[test]
    fn csv_cells_survive_quoting(cells in proptest::collection::vec("[ -~]{0,12}", 1..6)) {
        let header: Vec<&str> = cells.iter().map(|_| "c").collect();
        let row: Vec<String> = cells.clone();
        let text = io::format_csv(&header, &[row]);
        let mut lines = split_records(&text);
        prop_assert_eq!(lines.len(), 2);
        let parsed = parse_record(&lines.remove(1));
        prop_assert_eq!(parsed, cells);
    }

    /// γ(x, y) = γ(y, x) for both kernel families, indicator included.
    #[test]
    fn kernels_are_symmetric(
        xa in -1.0f64..1.0, ya in -1.0f64..1.0,
        xb in -1.0f64..1.0, yb in -1.0f64..1.0,
        delta in 0.05f64..1.5,
    ) {
        let x = Vec2::new(xa, ya);
        let y = Vec2::new(xb, yb);
        let g1 = Gamma1::new(delta);
        let g2 = Gamma2::new(delta);
        prop_assert_eq!(g1.value(x, y).to_bits(), g1.value(y, x).to_bits());
        prop_assert_eq!(g2.value(x, y).to_bits(), g2.value(y, x).to_bits());
    }

    /// Probe velocities are admissible deformation fields: zero on every
    /// pinned vertex, finite everywhere.
    #[test]
    fn bump_velocities_vanish_on_pinned_vertices(seed in 0u64..500, sigma in 0.02f64..0.3) {
        let mesh = samples::square_with_circle(6, 2, Vec2::new(0.5, 0.5), 0.25);
        let v = shape::interface_bump_velocity(&mesh, seed, sigma).unwrap();
        prop_assert_eq!(v.len(), mesh.n_vertices());
        for (i, w) in v.iter().enumerate() {
            prop_assert!(w.x.is_finite() && w.y.is_finite());
            if mesh.vertex_info(i).pinned() {
                prop_assert_eq!((w.x, w.y), (0.0, 0.0));
            }
        }
    }

    /// The mesh hash is stable under formatting round-trips and sensitive
    /// to any vertex move.
    #[test]
    fn mesh_hash_tracks_geometry(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mesh = samples::random_labeled_mesh(&mut rng, 3);
        let labels = RunConfig::default().label_map().unwrap();
        let back = io::parse_msh(&io::format_msh(&mesh), &labels).unwrap();
        prop_assert_eq!(io::mesh_hash(&mesh), io::mesh_hash(&back));

        let (mut vertices, triangles, labs) = mesh.to_raw();
        vertices[0].x += 1e-9;
        if let Ok(moved) = ltnshape::mesh::LabeledMesh::new(vertices, triangles, labs) {
            prop_assert_ne!(io::mesh_hash(&mesh), io::mesh_hash(&moved));
        }
    }
}

/// Splits a CRLF-terminated CSV document into records, respecting quoted
/// fields (an independent reading of RFC 4180, not the writer's inverse).
fn split_records(text: &str) -> Vec<String> {
    let mut records = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                current.push(c);
            }
            '\r' if !in_quotes && chars.peek() == Some(&'\n') => {
                chars.next();
                records.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    if !current.is_empty() {
        records.push(current);
    }
    records
}

fn parse_record(record: &str) -> Vec<String> {
    let mut cells = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = record.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                chars.next();
                current.push('"');
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => cells.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    cells.push(current);
    cells
}

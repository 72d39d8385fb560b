use proptest::prelude::*;

use quadforge_core::fixtures;
use quadforge_core::geom::Vec2;
use quadforge_core::mesh::TriMesh;
use quadforge_core::msh::MshFile;
use quadforge_core::singularity::{apply_edit, quarter_fraction, validate, EditKind, PatternEdit, SingularityPattern};

fn square() -> TriMesh {
    fixtures::unit_square(8)
}

fn interior(m: &TriMesh) -> Vec<usize> {
    (0..m.num_vertices()).filter(|&v| !m.is_boundary_vertex(v)).collect()
}

fn parse_fraction(s: &str) -> (i64, i64) {
    match s.split_once('/') {
        Some((n, d)) => (n.parse().unwrap(), d.parse().unwrap()),
        None => (s.parse().unwrap(), 1),
    }
}

proptest! {
    #[test]
    fn quarter_fraction_is_reduced_and_exact(q in -400i64..400) {
        let (n, d) = parse_fraction(&quarter_fraction(q));
        prop_assert!(d == 1 || d == 2 || d == 4);
        prop_assert_eq!(n * 4, q * d);
        if d == 2 {
            prop_assert!(n % 2 != 0);
        }
    }

    /// Balanced +1/−1 pairs keep the empty square valid; one extra entry breaks it by exactly its index.
    #[test]
    fn deficit_counts_quarters(picks in proptest::collection::vec((0usize..49, prop_oneof![Just(1i32), Just(-1), Just(-2)]), 0..6), extra in prop_oneof![Just(1i32), Just(-1)]) {
        let m = square();
        let inner = interior(&m);
        let mut entries = Vec::new();
        let mut used = std::collections::HashSet::new();
        for &(i, t) in &picks {
            let v = inner[i % inner.len()];
            if used.insert(v) {
                entries.push((v, t));
            }
        }
        let base: i32 = entries.iter().map(|e| e.1).sum();
        let free = inner.iter().copied().find(|v| !used.contains(v)).unwrap();
        entries.push((free, -base));
        let balanced = SingularityPattern::from_indices(&m, &entries).unwrap();
        prop_assert!(validate(&balanced, &m).ok);
        let spare = inner.iter().copied().find(|v| !used.contains(v) && *v != free).unwrap();
        entries.push((spare, extra));
        let off = SingularityPattern::from_indices(&m, &entries).unwrap();
        let r = validate(&off, &m);
        prop_assert!(!r.ok);
        prop_assert_eq!(r.deficit_quarters, extra as i64);
    }

    #[test]
    fn edits_are_undone_by_their_inverse(a in 0usize..49, b in 0usize..49, valence in prop_oneof![Just(3i32), Just(5), Just(6), Just(8)]) {
        let m = square();
        let inner = interior(&m);
        let (va, vb) = (inner[a], inner[b]);
        prop_assume!(va != vb);
        let start = SingularityPattern::from_valences(&m, &[(va, 5), (vb, 3)]).unwrap();
        let others: Vec<usize> = inner.iter().copied().filter(|&v| v != va && v != vb).collect();
        let c = others[(a + b) % others.len()];
        let edits = [
            EditKind::Add { vertex: c, valence },
            EditKind::Remove { vertex: va },
            EditKind::Move { from: vb, to: c },
            EditKind::SetValence { vertex: va, valence },
        ];
        for kind in edits {
            let (after, inverse) = apply_edit(&start, &PatternEdit::staged(kind.clone()), &m).unwrap();
            let (back, _) = apply_edit(&after, &inverse, &m).unwrap();
            prop_assert_eq!(&back, &start, "edit {:?}", kind);
        }
    }

    #[test]
    fn msh_round_trip_preserves_geometry(seed in proptest::collection::vec(-1.0f64..1.0, 162)) {
        let m = square();
        let h = 0.2 / 8.0;
        let pts: Vec<Vec2> = m
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, &p)| if m.is_boundary_vertex(i) { p } else { p + Vec2::new(seed[2 * i], seed[2 * i + 1]) * h })
            .collect();
        let jittered = TriMesh::new(pts, m.triangles().to_vec()).unwrap();
        let text = MshFile::from_trimesh(&jittered).to_text();
        let (back, report) = MshFile::parse(&text).unwrap().to_trimesh().unwrap();
        prop_assert_eq!(report.reoriented, 0);
        prop_assert_eq!(back.vertices(), jittered.vertices());
        prop_assert_eq!(back.triangles(), jittered.triangles());
    }

    #[test]
    fn walk_location_matches_exhaustive_scan(x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let m = fixtures::square_minus_disk(0.2, 32, 6);
        let p = Vec2::new(x, y);
        prop_assume!(p.dist(Vec2::new(0.5, 0.5)) > 0.21);
        let walk = m.locate(p).unwrap();
        let scan = m.locate_exhaustive(p).unwrap();
        let at = |t: usize, l: [f64; 3]| {
            let [a, b, c] = m.tri_points(t);
            a * l[0] + b * l[1] + c * l[2]
        };
        prop_assert!(at(walk.triangle, walk.bary).dist(p) < 1e-9);
        prop_assert!(at(scan.triangle, scan.bary).dist(p) < 1e-9);
        if walk.triangle != scan.triangle {
            // only allowed when the point sits on a shared edge or vertex
            prop_assert!(walk.bary.iter().any(|&l| l < 1e-9));
        }
    }
}

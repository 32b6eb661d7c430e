use super::*;

fn spec_json(weights: &[f64]) -> String {
    let leaves: Vec<String> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| format!(r#"{{"id": {i}, "w": {w}}}"#))
        .collect();
    let root = weights.len();
    let kids: Vec<String> = (0..weights.len()).map(|i| i.to_string()).collect();
    format!(
        r#"{{"mode": "binary", "leaves": [{}], "splits": [{{"parent": {root}, "children": [{}]}}]}}"#,
        leaves.join(","),
        kids.join(",")
    )
}

#[test]
fn dyadic_depth_zero_is_a_single_leaf() {
    let t = build_dyadic_interval(0).unwrap();
    assert_eq!(t.leaf_count(), 1);
    assert_eq!(t.split_count(), 0);
    assert_eq!(t.leaf_weights(), &[1.0]);
}

#[test]
fn dyadic_depth_one_and_two() {
    let t = build_dyadic_interval(1).unwrap();
    assert_eq!(t.leaf_weights(), &[0.5, 0.5]);
    assert_eq!(t.split_atom(1), t.root());
    let t = build_dyadic_interval(2).unwrap();
    assert_eq!(t.leaf_count(), 4);
    assert_eq!(t.atom_count(), 7);
    assert!(t.leaf_weights().iter().all(|&w| w == 0.25));
    // breadth first: root, then its children left to right
    let kids = t.children(t.root()).to_vec();
    assert_eq!(t.split_atom(2), kids[0]);
    assert_eq!(t.split_atom(3), kids[1]);
    assert!(t.validate().all_ok());
}

#[test]
fn dyadic_depth_over_limit() {
    assert!(build_dyadic_interval(25).unwrap_err().is_capacity());
}

#[test]
fn json_round_trip_is_lossless() {
    let t = build_dyadic_interval(3).unwrap();
    let text = t.to_json();
    let u = FiltrationTree::from_json(&text).unwrap();
    assert_eq!(u.to_json(), text);
    assert_eq!(u.to_spec(), t.to_spec());
}

#[test]
fn unequal_split_orders_children_by_measure() {
    let t = FiltrationTree::from_json(&spec_json(&[0.3, 0.7])).unwrap();
    let (a1, a2) = t.primed_children(t.root()).unwrap();
    assert_eq!(t.measure(a1), 0.3);
    assert_eq!(t.measure(a2), 0.7);
    // listing order does not matter
    let t = FiltrationTree::from_json(&spec_json(&[0.7, 0.3])).unwrap();
    let (a1, _) = t.primed_children(t.root()).unwrap();
    assert_eq!(t.measure(a1), 0.3);
}

#[test]
fn equal_weights_take_first_listed_child_as_primed() {
    let t = build_dyadic_interval(1).unwrap();
    let (a1, _) = t.primed_children(t.root()).unwrap();
    assert_eq!(a1, t.children(t.root())[0]);
}

#[test]
fn weight_sum_violation() {
    let e = FiltrationTree::from_json(&spec_json(&[0.3, 0.6])).unwrap_err();
    assert!(matches!(e, Error::WeightSum { .. }), "{e}");
}

#[test]
fn child_overlap_violation() {
    let text = r#"{"mode": "binary",
        "leaves": [{"id": 0, "w": 0.5}, {"id": 1, "w": 0.5}],
        "splits": [{"parent": 5, "children": [0, 6]}, {"parent": 6, "children": [0, 1]}]}"#;
    let e = FiltrationTree::from_json(text).unwrap_err();
    assert!(matches!(e, Error::ChildOverlap { .. }), "{e}");
}

#[test]
fn binary_mode_violation() {
    let text = r#"{"mode": "binary",
        "leaves": [{"id": 0, "w": 0.25}, {"id": 1, "w": 0.25}, {"id": 2, "w": 0.5}],
        "splits": [{"parent": 9, "children": [0, 1, 2]}]}"#;
    let e = FiltrationTree::from_json(text).unwrap_err();
    assert!(matches!(e, Error::BinaryMode { count: 3, .. }), "{e}");
}

#[test]
fn nary_arity_violation() {
    let text = r#"{"mode": "nary", "nu": 2,
        "leaves": [{"id": 0, "w": 0.25}, {"id": 1, "w": 0.25}, {"id": 2, "w": 0.5}],
        "splits": [{"parent": 9, "children": [0, 1, 2]}]}"#;
    let e = FiltrationTree::from_json(text).unwrap_err();
    assert!(matches!(e, Error::Arity { .. }), "{e}");
}

#[test]
fn tensor_square_shapes() {
    let t = build_tensor_square(2, 2, 1).unwrap();
    assert_eq!(t.coarse.children(t.coarse.root()).len(), 4);
    assert_eq!(t.fine.split_count(), 3);
    assert_eq!(t.fine.mode(), Mode::Binary);

    let t = build_tensor_square(2, 2, 2).unwrap();
    assert_eq!(t.coarse.leaf_count(), 16);
    assert!(t.coarse.leaf_weights().iter().all(|&w| w == 1.0 / 16.0));
    assert_eq!(t.fine.leaf_weights(), t.coarse.leaf_weights());

    let t = build_tensor_square(2, 3, 1).unwrap();
    assert_eq!(t.coarse.leaf_count(), 6);
    assert!(t.coarse.leaf_weights().iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
    assert!(t.fine.validate().all_ok());
}

#[test]
fn tensor_binarization_merges_right_column_pairs() {
    let t = build_tensor_square(2, 2, 2).unwrap();
    // every coarse atom in the rightmost column of its level has its two
    // lowest left-column cells merged into an atom of the fine tree
    for (a, &(lev, col, _)) in t.cells.iter().enumerate() {
        if lev == 2 || col + 1 != 2u64.pow(lev as u32) {
            continue;
        }
        let kids = t.coarse.children(a);
        let mut want = vec![t.coarse.label(kids[0]), t.coarse.label(kids[1])];
        want.sort();
        let found = (0..t.fine.atom_count()).any(|b| {
            let mut l: Vec<u64> = t.fine.children(b).iter().map(|&c| t.fine.label(c)).collect();
            l.sort();
            l == want
        });
        assert!(found, "merged pair missing under coarse atom {a}");
    }
}

#[test]
fn fractal_tree_marks_diagonal_atoms() {
    let f = build_fractal_tree(3, 5, 1).unwrap();
    let t = &f.nary;
    let kids = t.children(t.root());
    assert_eq!(kids.len(), 5);
    assert!(kids.iter().all(|&c| (t.measure(c) - 0.2).abs() < 1e-15));
    let diag: Vec<f64> = kids.iter().map(|&c| t.diag(c).unwrap()).collect();
    assert_eq!(diag.iter().filter(|&&d| d > 0.0).count(), 3);
    assert!(diag[..3].iter().all(|&d| (d - 1.0 / 3.0).abs() < 1e-15));

    let f = build_fractal_tree(2, 4, 2).unwrap();
    assert_eq!(f.nary.leaf_count(), 16);
    assert!(f.nary.leaf_weights().iter().all(|&w| w == 1.0 / 16.0));
    let deep_diag = (0..f.nary.atom_count())
        .filter(|&a| f.words[a].len() == 2 && f.is_diagonal(a))
        .count();
    assert_eq!(deep_diag, 4);

    let f = build_fractal_tree(3, 6, 0).unwrap();
    assert_eq!(f.nary.leaf_count(), 1);
    assert_eq!(f.nary.diag(f.nary.root()), Some(1.0));
}

#[test]
fn fractal_binary_refinement_merges_extra_letters() {
    let f = build_fractal_tree(3, 5, 2).unwrap();
    assert!(f.binary.validate().all_ok());
    for a in 0..f.nary.atom_count() {
        if f.nary.is_leaf(a) {
            continue;
        }
        let kids = f.nary.children(a);
        let mut want = vec![f.nary.label(kids[3]), f.nary.label(kids[4])];
        want.sort();
        let found = (0..f.binary.atom_count()).any(|b| {
            let mut l: Vec<u64> = f.binary.children(b).iter().map(|&c| f.binary.label(c)).collect();
            l.sort();
            l == want
        });
        assert!(found);
    }
}

#[test]
fn fractal_parameter_range() {
    assert!(build_fractal_tree(3, 4, 1).is_err());
    assert!(build_fractal_tree(3, 10, 1).is_err());
}

#[test]
fn rings_of_small_trees() {
    let t = build_dyadic_interval(0).unwrap();
    assert_eq!(t.enumerate_rings(), vec![Ring::atom(0)]);

    let t = build_dyadic_interval(1).unwrap();
    let rings = t.enumerate_rings();
    assert_eq!(rings.len(), 5);
    assert_eq!(rings.iter().filter(|r| r.is_atom()).count(), 3);
    for r in rings.iter().filter(|r| !r.is_atom()) {
        assert_eq!(r.outer, t.root());
        assert!((t.ring_measure(*r) - 0.5).abs() < 1e-15);
    }
}

#[test]
fn ring_count_matches_double_loop() {
    for depth in 0..=6 {
        let t = build_dyadic_interval(depth).unwrap();
        let mut count = 0;
        for a in 0..t.atom_count() {
            for b in 0..t.atom_count() {
                if a == b || t.is_strict_ancestor(a, b) {
                    count += 1;
                }
            }
        }
        assert_eq!(t.enumerate_rings().len(), count);
    }
}

#[test]
fn ring_leaf_sets_and_disjointness() {
    let t = build_dyadic_interval(3).unwrap();
    let rings = t.enumerate_rings();
    for r in &rings {
        let mut want: Vec<usize> = (0..t.leaf_count())
            .filter(|&l| {
                let la = t.leaf_atom(l);
                t.contains_atom(r.outer, la) && r.inner.map_or(true, |b| !t.contains_atom(b, la))
            })
            .collect();
        want.sort();
        assert_eq!(t.ring_leaves(*r), want);
    }
    for r1 in rings.iter().take(20) {
        for r2 in &rings {
            let m1 = t.ring_mask(*r1);
            let m2 = t.ring_mask(*r2);
            let direct = !m1.iter().zip(&m2).any(|(a, b)| *a && *b);
            assert_eq!(t.rings_disjoint(*r1, *r2), direct);
        }
    }
}

#[test]
fn chains_with_full_threshold_have_length_zero() {
    let t = build_dyadic_interval(3).unwrap();
    let chains = t.enumerate_chains(t.root(), 1.0);
    assert_eq!(chains.len(), 1);
    assert_eq!(chains[0].len(), 0);
    let chains = t.enumerate_chains(t.root(), 0.2);
    assert_eq!(chains.len(), 4);
    assert!(chains.iter().all(|c| c.len() == 2 && c.validate(&t, false).is_ok()));
}

#[test]
fn coarsen_keeps_upper_structure() {
    let t = build_dyadic_interval(3).unwrap();
    let cut = t.atoms_at_level(3);
    let (c, map) = t.coarsen(&cut).unwrap();
    assert_eq!(c.leaf_count(), cut.len());
    for a in 0..c.atom_count() {
        assert_eq!(c.measure(a), t.measure(map[a]));
    }
}

#[test]
fn atoms_at_level_partition_omega() {
    let t = build_dyadic_interval(3).unwrap();
    for n in 0..=t.split_count() {
        let atoms: Vec<Ring> = t.atoms_at_level(n).into_iter().map(Ring::atom).collect();
        assert_eq!(atoms.len(), n + 1);
        assert!(t.is_partition(&atoms));
    }
}

mod common;

use common::*;
use proptest::prelude::*;
use ringvar::{FiltrationTree, Mode, Ring};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn child_measures_add_up(splits in 1usize..40, nu in 2usize..5, seed in any::<u64>()) {
        let t = tree(splits, nu, seed);
        for a in 0..t.atom_count() {
            let cs = t.children(a);
            if cs.is_empty() {
                continue;
            }
            let s: f64 = cs.iter().map(|&c| t.measure(c)).sum();
            prop_assert!((s - t.measure(a)).abs() <= 1e-14 * (t.depth(a) + 1) as f64);
        }
        prop_assert!(t.validate().all_ok());
    }

    #[test]
    fn binary_children_are_ordered(splits in 1usize..40, seed in any::<u64>()) {
        let t = tree(splits, 2, seed);
        prop_assert_eq!(t.mode(), Mode::Binary);
        for a in 0..t.atom_count() {
            if let Some((small, large)) = t.primed_children(a) {
                prop_assert!(t.measure(large) >= t.measure(small));
                prop_assert!(t.measure(small) > 0.0);
            }
        }
    }

    #[test]
    fn ring_leaves_and_disjointness(splits in 1usize..25, nu in 2usize..4, seed in any::<u64>()) {
        let t = tree(splits, nu, seed);
        let mut r = rng(seed);
        let rings: Vec<Ring> = (0..30).map(|_| random_ring(&t, &mut r)).collect();
        for &x in &rings {
            let mut got = t.ring_leaves(x);
            got.sort_unstable();
            prop_assert_eq!(&got, &ring_leafset(&t, x));
        }
        for &x in &rings {
            for &y in &rings {
                let (a, b) = (ring_leafset(&t, x), ring_leafset(&t, y));
                let meet = a.iter().any(|l| b.contains(l));
                prop_assert_eq!(t.rings_disjoint(x, y), !meet);
            }
        }
    }

    #[test]
    fn json_round_trip(splits in 1usize..30, nu in 2usize..5, seed in any::<u64>()) {
        let t = tree(splits, nu, seed);
        let text = t.to_json();
        let back = FiltrationTree::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        prop_assert_eq!(back.leaf_weights(), t.leaf_weights());
    }
}

#[test]
fn ring_count_matches_double_loop() {
    for seed in 0..20 {
        let t = tree(20 + seed as usize, 2, seed);
        let mut count = 0;
        for a in 0..t.atom_count() {
            count += 1;
            for b in 0..t.atom_count() {
                if strictly_below(&t, a, b) {
                    count += 1;
                }
            }
        }
        assert_eq!(t.enumerate_rings().len(), count);
    }
    // balanced: L leaves carry Θ(L log L) rings
    for depth in 2..=6 {
        let t = ringvar::filtration::build_dyadic_interval(depth).unwrap();
        let l = t.leaf_count() as f64;
        let ratio = t.enumerate_rings().len() as f64 / (l * l.log2());
        assert!((0.5..=4.0).contains(&ratio), "depth {depth}: {ratio}");
    }
}

mod common;

use common::*;
use proptest::prelude::*;
use ringvar::filtration::build_dyadic_interval;
use ringvar::geometry::{
    chains_with_threshold, gen_fractal_function, gen_notw3_greedy, gen_section2_chain, gen_tensor_example,
    w2star_eval, w3_chain_max,
};
use ringvar::greedy::{BlockGreedyState, GreedyState};
use ringvar::{LocalSpace, LocalSystem};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_is_deterministic_and_errors_fall(depth in 2usize..7, seed in any::<u64>()) {
        let t = build_dyadic_interval(depth).unwrap();
        let sys = LocalSystem::build(&t, &LocalSpace::constants(&t)).unwrap();
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let a = GreedyState::new(&sys, &f, 2.0).unwrap();
        let b = GreedyState::new(&sys, &f, 2.0).unwrap();
        prop_assert_eq!(a.order(), b.order());
        let errs = a.errors(&t, &f);
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn block_orders_stay_weak(splits in 2usize..30, nu in 2usize..4, seed in any::<u64>(), tq in 0.1f64..1.0, swaps in 0usize..100) {
        let t = tree(splits, nu, seed);
        let sys = LocalSystem::build(&t, &LocalSpace::polynomials(&t, 1)).unwrap();
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let mut bs = BlockGreedyState::new(&sys, &f, 1.5, tq).unwrap();
        prop_assert!(bs.is_weak_order(&bs.order));
        bs.perturb(swaps, seed);
        prop_assert!(bs.is_weak_order(&bs.order));
    }

    #[test]
    fn w2star_is_one_at_tau_p_and_dominates_w3(splits in 2usize..14, seed in any::<u64>(), p in 1.2f64..4.0, frac in 0.2f64..0.9) {
        let t = tree(splits, 2, seed);
        let s = LocalSpace::constants(&t);
        let sigma = frac * p;
        for c in chains_with_threshold(&t, 0.1) {
            if c.len() > 12 {
                continue;
            }
            let one = w2star_eval(&t, &s, &c, p, p).unwrap().m;
            prop_assert!((one - 1.0).abs() < 1e-12);
            let w2 = w2star_eval(&t, &s, &c, p, sigma).unwrap().m;
            let (w3, _, _) = w3_chain_max(&t, &c, p, sigma).unwrap();
            prop_assert!(w3 <= w2 * (1.0 + 1e-12), "{w3} > {w2}");
        }
    }
}

#[test]
fn generated_trees_are_valid() {
    let n = gen_notw3_greedy(8, 2.0, 1.0).unwrap();
    assert!(n.tree.validate().all_ok());
    assert!(n.f.mean(&n.tree).abs() <= 1e-12);
    assert!(n.report.greedy_is_even);
    assert!(gen_section2_chain(4, 2.0, 1.0).unwrap().tree.validate().all_ok());
    let te = gen_tensor_example(2, 2, 3, 1.0, 2.0).unwrap();
    assert!(te.trees.coarse.validate().all_ok() && te.trees.fine.validate().all_ok());
    let fr = gen_fractal_function(3, 5, 2, 1.0, 2.0).unwrap();
    assert!(fr.trees.nary.validate().all_ok() && fr.trees.binary.validate().all_ok());
}

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use ringvar::experiments::random_dictionary_sum;
use ringvar::local_basis::project_level;
use ringvar::lp_approx::NearBestRule;
use ringvar::splitting::{cdpx_split, SetFunction};
use ringvar::variation::{var_seminorm, var_seminorm_bruteforce, w_mu, VariationParams};
use ringvar::{LocalSpace, Ring};

const PARAMS: [(f64, f64); 4] = [(1.0, 2.0), (0.5, 1.5), (1.0, 4.0), (0.5, 1.0)];

fn vp(i: usize) -> VariationParams {
    let (s, p) = PARAMS[i];
    VariationParams::new(s, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_matches_bruteforce(splits in 1usize..8, nu in 2usize..4, seed in any::<u64>(), pi in 0usize..4, degree in 0usize..2) {
        let t = tree(splits, nu, seed);
        prop_assume!(t.leaf_count() <= 12);
        let s = if degree == 0 { LocalSpace::constants(&t) } else { LocalSpace::polynomials(&t, 1) };
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let a = var_seminorm(&t, &s, &f, vp(pi)).unwrap().seminorm;
        let b = var_seminorm_bruteforce(&t, &s, &f, vp(pi)).unwrap().seminorm;
        prop_assert!((a - b).abs() <= 1e-8 * b.max(1e-12), "{a} vs {b}");
    }

    #[test]
    fn bernstein_with_constant_one(splits in 1usize..60, nu in 2usize..4, seed in any::<u64>(), pi in 0usize..3, n in 1usize..17) {
        let t = tree(splits, nu, seed);
        let params = vp(pi);
        let g = random_dictionary_sum(&t, n, &mut rng(seed));
        let v = var_seminorm(&t, &LocalSpace::constants(&t), &g, params).unwrap();
        prop_assert!(v.seminorm <= (n as f64).powf(params.beta) * v.lp_norm + 1e-9);
    }

    #[test]
    fn near_best_stability(splits in 2usize..20, seed in any::<u64>(), pi in 0usize..3) {
        let t = tree(splits, 2, seed);
        let s = LocalSpace::constants(&t);
        let params = vp(pi);
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let vf = var_seminorm(&t, &s, &f, params).unwrap().seminorm;
        let mu = rng(seed ^ 7).gen_range(0..=t.split_count());
        let two = 2f64.powf(1.0 / params.p.min(1.0));
        for (rule, m) in [(NearBestRule::Minimizer, two), (NearBestRule::Orthoprojector, 1.0)] {
            let w = w_mu(&t, &s, &f, mu, params.p, m, rule).unwrap();
            let vw = var_seminorm(&t, &s, &w.function, params).unwrap().seminorm;
            prop_assert!(vw <= w.certified_m * vf * (1.0 + 1e-9) + 1e-12);
        }
        // the top level reproduces f
        let top = w_mu(&t, &s, &f, t.split_count(), params.p, two, NearBestRule::Minimizer).unwrap();
        let vt = var_seminorm(&t, &s, &top.function, params).unwrap().seminorm;
        prop_assert!(vf <= vt + 1e-6);
    }

    #[test]
    fn conditional_expectations_are_monotone(splits in 2usize..25, nu in 2usize..4, seed in any::<u64>(), pi in 0usize..3) {
        let t = tree(splits, nu, seed);
        let s = LocalSpace::constants(&t);
        let params = vp(pi);
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let mut prev = 0.0;
        for mu in 0..=t.split_count() {
            let e = project_level(&t, &s, &f, mu as isize).unwrap();
            let v = var_seminorm(&t, &s, &e, params).unwrap().seminorm;
            prop_assert!(v >= prev * (1.0 - 1e-12) - 1e-12, "mu={mu}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn splitting_postconditions(splits in 1usize..11, nu in 2usize..5, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let t = tree(splits, nu, seed);
        let s = LocalSpace::constants(&t);
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let err = SetFunction::lp_error(&t, &s, &f, 2.0).unwrap();
        let phi = SetFunction::new(|r| t.ring_measure(r) + err.value(r));
        let leaf_max = (0..t.leaf_count()).map(|l| phi.value(Ring::atom(t.leaf_atom(l)))).fold(0.0, f64::max);
        let top = phi.value(Ring::atom(t.root()));
        let eps = leaf_max + frac * (top - leaf_max).max(0.0) + 1e-12;
        let r = cdpx_split(&t, &phi, eps).unwrap();
        let c = r.verify(&t, &phi);
        prop_assert!(c.all(), "{:?}", c);
    }

    #[test]
    fn error_powers_decrease_along_chains(splits in 1usize..20, nu in 2usize..4, seed in any::<u64>(), p in 1.0f64..4.0) {
        let t = tree(splits, nu, seed);
        let s = LocalSpace::constants(&t);
        let f = random_fn(t.leaf_count(), &mut rng(seed));
        let phi = SetFunction::lp_error(&t, &s, &f, p).unwrap();
        for a in 0..t.atom_count() {
            for &c in t.children(a) {
                prop_assert!(phi.value(Ring::atom(c)) <= phi.value(Ring::atom(a)) + 1e-9);
            }
        }
    }
}

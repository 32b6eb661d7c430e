use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::filtration::{build_dyadic_interval, build_random_tree};

fn equal_chain(n: usize) -> (FiltrationTree, Chain) {
    build_chain_tree(&vec![1.0 / (2.0 * n as f64); n]).unwrap()
}

#[test]
fn w2star_single_step_is_one() {
    let (t, c) = equal_chain(1);
    let s = LocalSpace::constants(&t);
    assert!((w2star_eval(&t, &s, &c, 2.0, 1.0).unwrap().m - 1.0).abs() < 1e-15);
}

#[test]
fn w2star_equal_pieces() {
    for n in [2, 5, 16] {
        let (t, c) = equal_chain(n);
        let s = LocalSpace::constants(&t);
        for &(p, tau) in &[(2.0, 1.0), (3.0, 0.5), (1.5, 1.0)] {
            let m = w2star_eval(&t, &s, &c, p, tau).unwrap().m;
            let want = (n as f64).powf(1.0 / tau - 1.0 / p);
            assert!((m - want).abs() < 1e-12 * want, "n={n}: {m} vs {want}");
        }
    }
}

#[test]
fn w2star_tau_equal_p_is_one_on_every_chain() {
    let t = build_random_tree(25, 3, 4).unwrap();
    let s = LocalSpace::constants(&t);
    for c in chains_with_threshold(&t, 0.1) {
        let m = w2star_eval(&t, &s, &c, 2.5, 2.5).unwrap().m;
        assert!((m - 1.0).abs() < 1e-12);
    }
}

#[test]
fn w2star_degenerate_and_sampled() {
    let (t, c) = equal_chain(3);
    let s = LocalSpace::constants(&t);
    let single = Chain { atoms: vec![c.atoms[0]] };
    assert!(w2star_eval(&t, &s, &single, 2.0, 1.0).is_err());

    let poly = LocalSpace::polynomials(&t, 1);
    let v = w2star_eval(&t, &poly, &c, 2.0, 1.0).unwrap();
    assert!(v.sampled);
    // every f ∈ S gives a lower bound, the constant one in particular
    let constant = w2star_eval(&t, &s, &c, 2.0, 1.0).unwrap().m;
    assert!(v.m >= constant - 1e-9);
    // and no ratio exceeds n^{1/τ − 1/p} times ... the ℓ^τ/ℓ^p comparison
    assert!(v.m <= 3f64.powf(0.5) + 1e-9);
    let again = w2star_eval(&t, &poly, &c, 2.0, 1.0).unwrap();
    assert_eq!(v, again);
}

#[test]
fn condition_report_reproduces_worst_chain() {
    let t = build_random_tree(30, 2, 8).unwrap();
    let s = LocalSpace::constants(&t);
    let r = w2star_check(&t, &s, 2.0, 1.0, 0.3, 10.0).unwrap();
    assert!(r.chains_checked > 0);
    let again = w2star_eval(&t, &s, &r.worst_chain, 2.0, 1.0).unwrap().m;
    assert!((again - r.best_m).abs() <= 1e-9);
    assert!(r.to_json(&t).contains("\"bestM\""));

    let w = w3_check(&t, 2.0, 1.0, 0.3, 10.0).unwrap();
    let (b, g) = w.worst_blocks.clone().unwrap();
    let again = w3_eval(&t, &w.worst_chain, &b, &g, 2.0, 1.0).unwrap();
    assert!((again - w.best_m).abs() <= 1e-9);
    assert!(w3_check(&t, 2.0, 1.0, 1.0, 10.0).is_err());
}

#[test]
fn w3_trivial_cases() {
    let (t, c) = equal_chain(4);
    let blocks = vec![vec![0, 1], vec![2, 3]];
    assert_eq!(w3_eval(&t, &c, &blocks, &[vec![], vec![]], 2.0, 1.0).unwrap(), 0.0);
    let all = vec![vec![0, 1, 2, 3]];
    assert_eq!(w3_eval(&t, &c, &all, &all, 2.0, 1.0).unwrap(), 0.0);
}

#[test]
fn w3_rejects_malformed_blocks() {
    let (t, c) = equal_chain(4);
    let bad = [
        (vec![vec![0, 2], vec![1, 3]], vec![vec![], vec![]]),
        (vec![vec![0, 1], vec![2]], vec![vec![], vec![]]),
        (vec![vec![0, 1], vec![2, 3]], vec![vec![2], vec![]]),
        (vec![vec![0, 1], vec![2, 3]], vec![vec![]]),
        (vec![vec![0, 1], vec![], vec![2, 3]], vec![vec![], vec![], vec![]]),
    ];
    for (b, g) in bad {
        assert!(w3_eval(&t, &c, &b, &g, 2.0, 1.0).is_err(), "{b:?} {g:?}");
    }
}

#[test]
fn w3_quarter_instance_closed_form() {
    // pieces 1/(4n): n·(4n)^{−σ/p} to the power 1/σ, over (1/2)^{1/p}
    for n in [2, 4, 8, 16] {
        let (t, inst) = w3_quarter_instance(n).unwrap();
        for &(sigma, p) in &[(1.0, 2.0), (0.5, 3.0)] {
            let v = w3_eval(&t, &inst.chain, &inst.blocks, &inst.subsets, p, sigma).unwrap();
            let want = (n as f64).powf(1.0 / sigma - 1.0 / p) * 2f64.powf(-1.0 / p);
            assert!((v - want).abs() < 1e-12 * want);
        }
    }
}

#[test]
fn w3_chain_max_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.gen_range(1..=6);
        let pieces: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.15)).collect();
        let (t, c) = build_chain_tree(&pieces).unwrap();
        let (v, _, _) = w3_chain_max(&t, &c, 2.0, 1.0).unwrap();
        // every composition of n, every subset
        let mut best: f64 = 0.0;
        for cuts in 0u32..(1 << (n - 1)) {
            let mut blocks = vec![vec![0]];
            for j in 1..n {
                if cuts >> (j - 1) & 1 == 1 {
                    blocks.push(vec![j]);
                } else {
                    blocks.last_mut().unwrap().push(j);
                }
            }
            for sub in 0u32..(1 << n) {
                let subsets: Vec<Vec<usize>> = blocks
                    .iter()
                    .map(|b| b.iter().copied().filter(|&j| sub >> j & 1 == 1).collect())
                    .collect();
                best = best.max(w3_eval(&t, &c, &blocks, &subsets, 2.0, 1.0).unwrap());
            }
        }
        assert!((v - best).abs() < 1e-12, "{v} vs {best}");
    }
}

#[test]
fn w2star_dominates_w3() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let n = rng.gen_range(1..=8);
        let pieces: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.1)).collect();
        let (t, c) = build_chain_tree(&pieces).unwrap();
        let s = LocalSpace::constants(&t);
        let sigma = rng.gen_range(0.3..1.5);
        let p = sigma + rng.gen_range(0.1..2.0);
        let (w3, _, _) = w3_chain_max(&t, &c, p, sigma).unwrap();
        let w2 = w2star_eval(&t, &s, &c, p, sigma).unwrap().m;
        assert!(w3 <= w2 * (1.0 + 1e-12));
    }
}

#[test]
fn section2_chain_ratios() {
    for big_n in [1, 2, 4, 8] {
        let g = gen_section2_chain(big_n, 2.0, 1.0).unwrap();
        let r = &g.report;
        assert!(g.tree.validate().all_ok());
        assert!((r.lp_norm - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(r.chain_ratio >= 2f64.sqrt() * big_n as f64 - 1e-9);
        assert!(r.ratio >= big_n as f64, "N={big_n}: {r:?}");
        // the two-term dictionary representation costs about ‖f‖_p
        assert!(r.dictionary_ell_tau / r.lp_norm < 3.0);
    }
    assert!(gen_section2_chain(0, 2.0, 1.0).is_err());
}

#[test]
fn tensor_k1_is_order_one() {
    let ex = gen_tensor_example(2, 2, 1, 1.0, 2.0).unwrap();
    let r = &ex.report;
    assert!(r.var_fine > 0.0 && r.var_coarse > 0.0);
    assert!(r.var_coarse <= r.var_fine + 1e-12);
    assert!(r.var_fine / r.var_coarse < 3.0);
    assert!(ex.trees.fine.validate().all_ok() && ex.trees.coarse.validate().all_ok());
}

#[test]
fn tensor_merged_atoms_give_the_explicit_sum() {
    // α_j = 1 for n1 = n2 = 2, σ = 1, p = 2: each level adds 2^{j−1}·√2·2^{−j}
    for k in 1..=4 {
        let ex = gen_tensor_example(2, 2, k, 1.0, 2.0).unwrap();
        let want = k as f64 / 2f64.sqrt();
        assert!((ex.report.merged_lower - want).abs() < 1e-12);
        assert!(ex.report.var_fine >= ex.report.merged_lower - 1e-12);
        assert!(ex.report.var_coarse <= ex.report.var_fine + 1e-12);
    }
}

#[test]
fn fractal_norms_and_lower_bound() {
    let ex = gen_fractal_function(3, 5, 3, 1.0, 2.0).unwrap();
    let r = &ex.report;
    for (a, b) in r.fj_p.iter().zip(&r.fj_p_expected) {
        assert!((a - b).abs() < 1e-12 * b);
    }
    assert!((r.binary_lower - r.binary_lower_expected).abs() < 1e-12);
    assert!(r.binary_var >= r.binary_lower - 1e-12);
    assert!(r.nary_var <= r.binary_var + 1e-12);
    assert!(r.witness_diag_mass <= 1.0 + 1e-12);
    assert!(r.within_budget);
    assert!(ex.trees.binary.validate().all_ok());

    let zero = gen_fractal_function(3, 5, 0, 1.0, 2.0).unwrap();
    assert_eq!(zero.phi.max_abs(), 0.0);
    assert_eq!(zero.report.nary_var, 0.0);
    assert_eq!(zero.report.binary_var, 0.0);
}

#[test]
fn rademacher_basics() {
    let (t, f) = gen_rademacher(&[], 6, 1.0, 2.0).unwrap();
    assert_eq!(f.max_abs(), 0.0);
    let vp = VariationParams::new(1.0, 2.0).unwrap();
    assert_eq!(rademacher_distance(&t, 6, &[], &[], vp).unwrap(), 0.0);
    assert!(gen_rademacher(&[6], 6, 1.0, 2.0).is_err());
    assert!(gen_rademacher(&[0], 6, 1.0, 2.0).is_err());
    // r_j has mean zero on every level-(j−1) atom and is ±1
    let r = rademacher(&t, 6, 3).unwrap();
    for a in t.atoms_at_level(2) {
        let s: f64 = t.dfs_leaves()[t.span(a)].iter().map(|&l| r.values()[l]).sum();
        assert_eq!(s, 0.0);
    }
    assert!(r.values().iter().all(|x| x.abs() == 1.0));
}

#[test]
fn rademacher_single_level_seminorm() {
    // E_2(r_j, A) = |A|^{1/2} on level-(j−1) atoms; the sum is 2^{(j−1)/2}
    let t = build_dyadic_interval(8).unwrap();
    let vp = VariationParams::new(1.0, 2.0).unwrap();
    for j in 1..5 {
        let f = rademacher(&t, 8, j).unwrap();
        let v = var_seminorm(&t, &LocalSpace::constants(&t), &f, vp).unwrap().seminorm;
        assert!(v >= 2f64.powf((j as f64 - 1.0) / 2.0) - 1e-12);
    }
}

#[test]
fn notw3_instance_properties() {
    let ex = gen_notw3_greedy(4, 2.0, 1.0).unwrap();
    let r = &ex.report;
    assert!(r.mean_f.abs() < 1e-12);
    assert!(r.coefficient_bounds_hold);
    assert!(r.a_min >= 1.0 - 1e-12 && r.a_max <= 1.0 + r.gamma + 1e-12);
    assert!((r.gamma - 0.5).abs() < 1e-12);
    assert!(r.greedy_is_even);
    assert!(r.max_odd <= r.min_even);
    assert!((r.t.sqrt() - 2.0 * r.s.sqrt()).abs() < 1e-12);
    assert!(ex.tree.validate().all_ok());
    assert!(gen_notw3_greedy_with(4, 2.0, 1.0, 1.0).is_err());
    assert!(gen_notw3_greedy(1, 2.0, 1.0).is_err());
}

#[test]
fn notw3_greedy_ratio_grows() {
    let ns = [4usize, 8, 16, 32];
    let ratios: Vec<f64> = ns
        .iter()
        .map(|&n| gen_notw3_greedy(n, 2.0, 1.0).unwrap().report.ratio)
        .collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &ratios).unwrap();
    eprintln!("ratios {ratios:?} slope {slope}");
    assert!(ratios.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn chain_tree_validation() {
    assert!(build_chain_tree(&[]).is_err());
    assert!(build_chain_tree(&[0.5, 0.5]).is_err());
    assert!(build_chain_tree(&[0.2, -0.1]).is_err());
    let (t, c) = build_chain_tree(&[0.25, 0.25]).unwrap();
    assert_eq!(c.len(), 2);
    assert!((t.measure(c.atoms[2]) - 0.5).abs() < 1e-15);
    assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    assert!((loglog_slope(&[1.0, 2.0, 4.0], &[3.0, 6.0, 12.0]).unwrap() - 1.0).abs() < 1e-12);
}

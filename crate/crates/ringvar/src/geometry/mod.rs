//! Chain conditions w2* and w3, and generators for the counterexamples.
//!
//! Chains are passed as [`Chain`]s of atoms; the pieces of a chain are the
//! rings `X_{i−1} \ X_i`.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;

use crate::error::{param, Error, Result};
use crate::filtration::{
    build_dyadic_interval, build_fractal_tree, build_tensor_square, check_capacity, Chain, FiltrationTree,
    FractalTrees, Mode, Ring, TensorTrees, TreeBuilder,
};
use crate::greedy::{approx_quasinorm, ApproxNormParams, GreedyState};
use crate::local_basis::{LeafFunction, LocalSpace, LocalSystem};
use crate::lp_approx::best_lp;
use crate::variation::{var_seminorm, VariationParams, VariationResult};

#[cfg(test)]
mod tests;

/// Chain threshold used by the generators.
pub const DEFAULT_RHO: f64 = 2.0 / 3.0;

/// Directions sampled for `dim S > 1`.
pub const W2STAR_SAMPLES: usize = 256;

const W2STAR_SEED: u64 = 0x5eed;

/// Longest chain for which w3 is maximised over all blocks and subsets.
pub const W3_MAX_CHAIN: usize = 16;

fn piece(chain: &Chain, i: usize) -> Ring {
    Ring {
        outer: chain.atoms[i],
        inner: Some(chain.atoms[i + 1]),
    }
}

fn whole(chain: &Chain) -> Ring {
    Ring {
        outer: chain.atoms[0],
        inner: chain.atoms.last().copied(),
    }
}

fn check_chain(tree: &FiltrationTree, chain: &Chain) -> Result<()> {
    chain.validate(tree, true)?;
    if chain.is_empty() || tree.ring_measure(whole(chain)) <= 0.0 {
        return Err(param("degenerate chain: X_0 \\ X_n has measure zero"));
    }
    Ok(())
}

fn check_exponents(p: f64, q: f64, name: &str) -> Result<()> {
    if !(p > 0.0 && p.is_finite() && q > 0.0 && q.is_finite()) {
        return Err(param(format!("need p > 0 and {name} > 0, got p={p}, {name}={q}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct W2StarValue {
    pub m: f64,
    /// Whether the supremum over `S` was estimated by sampling.
    pub sampled: bool,
    /// Coefficients of the maximiser in the basis of `S`.
    pub coeffs: Vec<f64>,
}

/// `sup_{f∈S} (Σ_i ‖f1_{X_{i−1}∖X_i}‖_p^τ)^{1/τ} / ‖f1_{X_0∖X_n}‖_p` for one chain.
///
/// Exact for `dim S = 1`. Otherwise the supremum is taken over
/// [`W2STAR_SAMPLES`] Gaussian directions followed by a pattern search.
pub fn w2star_eval(
    tree: &FiltrationTree,
    space: &LocalSpace,
    chain: &Chain,
    p: f64,
    tau: f64,
) -> Result<W2StarValue> {
    check_exponents(p, tau, "tau")?;
    check_chain(tree, chain)?;
    if !space.is_bound_to(tree) {
        return Err(param("local space is not bound to the tree"));
    }
    let n = chain.len();
    if space.is_constant() {
        let lhs: f64 = (0..n)
            .map(|i| tree.ring_measure(piece(chain, i)).powf(tau / p))
            .sum::<f64>()
            .powf(1.0 / tau);
        let rhs = tree.ring_measure(whole(chain)).powf(1.0 / p);
        return Ok(W2StarValue {
            m: lhs / rhs,
            sampled: false,
            coeffs: vec![1.0],
        });
    }
    let ratio = |c: &[f64]| -> f64 {
        let f = space.combine(c);
        let rhs = f.norm_p_on(tree, whole(chain), p);
        if rhs <= 0.0 {
            return 0.0;
        }
        let lhs: f64 = (0..n)
            .map(|i| f.norm_p_on(tree, piece(chain, i), p).powf(tau))
            .sum::<f64>()
            .powf(1.0 / tau);
        lhs / rhs
    };
    let dim = space.dim();
    if dim == 1 {
        return Ok(W2StarValue {
            m: ratio(&[1.0]),
            sampled: false,
            coeffs: vec![1.0],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(W2STAR_SEED);
    let mut best = (f64::NEG_INFINITY, vec![0.0; dim]);
    for _ in 0..W2STAR_SAMPLES {
        let mut c: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        c.iter_mut().for_each(|x| *x /= norm);
        let v = ratio(&c);
        if v > best.0 {
            best = (v, c);
        }
    }
    // pattern search around the best direction
    let (mut v, mut c) = best;
    let mut h = 0.25;
    let mut iters = 0;
    while h > 1e-7 && iters < 400 {
        iters += 1;
        let mut moved = false;
        for k in 0..dim {
            for s in [h, -h] {
                let mut d = c.clone();
                d[k] += s;
                let w = ratio(&d);
                if w > v {
                    v = w;
                    c = d;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    c.iter_mut().for_each(|x| *x /= norm);
    Ok(W2StarValue {
        m: v,
        sampled: true,
        coeffs: c,
    })
}

/// Measures of the pieces `|X_j \ X_{j+1}|`.
fn piece_measures(tree: &FiltrationTree, chain: &Chain) -> Vec<f64> {
    (0..chain.len()).map(|i| tree.ring_measure(piece(chain, i))).collect()
}

fn check_blocks(n: usize, blocks: &[Vec<usize>], subsets: &[Vec<usize>]) -> Result<()> {
    if blocks.len() != subsets.len() {
        return Err(param(format!(
            "malformed blocks: {} blocks but {} subsets",
            blocks.len(),
            subsets.len()
        )));
    }
    let mut next = 0;
    for (i, b) in blocks.iter().enumerate() {
        if b.is_empty() || b.iter().enumerate().any(|(k, &j)| j != next + k) {
            return Err(param(format!("malformed blocks: block {i} is not the next run of indices")));
        }
        next += b.len();
        let mut seen = HashSet::new();
        for &j in &subsets[i] {
            if !b.contains(&j) || !seen.insert(j) {
                return Err(param(format!("malformed blocks: subset {i} is not a subset of its block")));
            }
        }
    }
    if next != n {
        return Err(param(format!("malformed blocks: they cover {next} of {n} indices")));
    }
    Ok(())
}

fn w3_lhs(m: &[f64], blocks: &[Vec<usize>], subsets: &[Vec<usize>], p: f64, sigma: f64) -> f64 {
    let s: f64 = blocks
        .iter()
        .zip(subsets)
        .map(|(b, g)| {
            let r: f64 = b.iter().map(|&j| m[j]).sum();
            let q: f64 = g.iter().map(|&j| m[j]).sum();
            let x = q.min(r - q).max(0.0);
            if x == 0.0 {
                0.0
            } else {
                x.powf(sigma / p)
            }
        })
        .sum();
    if s == 0.0 {
        0.0
    } else {
        s.powf(1.0 / sigma)
    }
}

/// `(Σ_i min(|Q_i|, |R_i∖Q_i|)^{σ/p})^{1/σ} / |X_0∖X_n|^{1/p}`.
///
/// `blocks[i]` is `Λ_i` (consecutive piece indices, in order, covering
/// `0..n`) and `subsets[i]` is `Γ_i ⊆ Λ_i`.
pub fn w3_eval(
    tree: &FiltrationTree,
    chain: &Chain,
    blocks: &[Vec<usize>],
    subsets: &[Vec<usize>],
    p: f64,
    sigma: f64,
) -> Result<f64> {
    check_exponents(p, sigma, "sigma")?;
    check_chain(tree, chain)?;
    check_blocks(chain.len(), blocks, subsets)?;
    let m = piece_measures(tree, chain);
    Ok(w3_lhs(&m, blocks, subsets, p, sigma) / tree.ring_measure(whole(chain)).powf(1.0 / p))
}

/// Largest w3 ratio of one chain over all blocks and subsets, with the
/// maximising blocks and subsets.
pub fn w3_chain_max(
    tree: &FiltrationTree,
    chain: &Chain,
    p: f64,
    sigma: f64,
) -> Result<(f64, Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    check_exponents(p, sigma, "sigma")?;
    check_chain(tree, chain)?;
    let n = chain.len();
    if n > W3_MAX_CHAIN {
        return Err(Error::Capacity {
            what: "w3 chain length",
            requested: n,
            limit: W3_MAX_CHAIN,
        });
    }
    let m = piece_measures(tree, chain);
    // best split of a single block [i, k): subset sum closest to half
    let block_best = |i: usize, k: usize| -> (f64, Vec<usize>) {
        let len = k - i;
        let r: f64 = m[i..k].iter().sum();
        let mut best = (0.0, Vec::new());
        for mask in 0u32..(1 << len) {
            let q: f64 = (0..len).filter(|b| mask >> b & 1 == 1).map(|b| m[i + b]).sum();
            let x = q.min(r - q).max(0.0);
            let v = if x == 0.0 { 0.0 } else { x.powf(sigma / p) };
            if v > best.0 {
                best = (v, (0..len).filter(|b| mask >> b & 1 == 1).map(|b| i + b).collect());
            }
        }
        best
    };
    let mut best = vec![(0.0f64, usize::MAX, Vec::new()); n + 1];
    for k in 1..=n {
        best[k].0 = f64::NEG_INFINITY;
        for i in 0..k {
            let (v, g) = block_best(i, k);
            let total = best[i].0 + v;
            if total > best[k].0 {
                best[k] = (total, i, g);
            }
        }
    }
    let (mut blocks, mut subsets) = (Vec::new(), Vec::new());
    let mut k = n;
    while k > 0 {
        let (_, i, g) = &best[k];
        blocks.push((*i..k).collect::<Vec<_>>());
        subsets.push(g.clone());
        k = *i;
    }
    blocks.reverse();
    subsets.reverse();
    let value = w3_lhs(&m, &blocks, &subsets, p, sigma) / tree.ring_measure(whole(chain)).powf(1.0 / p);
    Ok((value, blocks, subsets))
}

/// Largest constant over all chains enumerated in a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub condition: &'static str,
    pub best_m: f64,
    pub worst_chain: Chain,
    pub rho: f64,
    pub m_cap: f64,
    /// `best_m ≤ m_cap`.
    pub satisfied: bool,
    pub sampled: bool,
    pub chains_checked: usize,
    /// Maximising `Λ_i`, `Γ_i` (w3 only).
    pub worst_blocks: Option<(Vec<Vec<usize>>, Vec<Vec<usize>>)>,
}

impl ConditionReport {
    pub fn to_json(&self, tree: &FiltrationTree) -> String {
        let chain: Vec<u64> = self.worst_chain.atoms.iter().map(|&a| tree.label(a)).collect();
        let v = json!({
            "condition": self.condition,
            "bestM": self.best_m,
            "worstChain": chain,
            "rhoChain": self.rho,
            "mCap": self.m_cap,
            "satisfied": self.satisfied,
            "sampled": self.sampled,
            "chainsChecked": self.chains_checked,
            "worstBlocks": self.worst_blocks.as_ref().map(|b| &b.0),
            "worstSubsets": self.worst_blocks.as_ref().map(|b| &b.1),
        });
        serde_json::to_string_pretty(&v).expect("report serializes")
    }
}

/// Every chain `X_0 ⊃ ⋯ ⊃ X_n` (`n ≥ 1`, child steps) with `|X_n| ≥ ρ|X_0|`.
pub fn chains_with_threshold(tree: &FiltrationTree, rho: f64) -> Vec<Chain> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for a in 0..tree.atom_count() {
        if tree.is_leaf(a) {
            continue;
        }
        for c in tree.enumerate_chains(a, rho) {
            for k in 2..=c.atoms.len() {
                let prefix = c.atoms[..k].to_vec();
                if seen.insert(prefix.clone()) {
                    out.push(Chain { atoms: prefix });
                }
            }
        }
    }
    out
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(param(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// w2* over every chain of the tree with `|X_n| ≥ ρ|X_0|`.
pub fn w2star_check(
    tree: &FiltrationTree,
    space: &LocalSpace,
    p: f64,
    tau: f64,
    rho: f64,
    m_cap: f64,
) -> Result<ConditionReport> {
    check_rho(rho)?;
    let chains = chains_with_threshold(tree, rho);
    let mut report = ConditionReport {
        condition: "w2star",
        best_m: 0.0,
        worst_chain: Chain {
            atoms: vec![tree.root()],
        },
        rho,
        m_cap,
        satisfied: true,
        sampled: false,
        chains_checked: chains.len(),
        worst_blocks: None,
    };
    for c in chains {
        let v = w2star_eval(tree, space, &c, p, tau)?;
        report.sampled |= v.sampled;
        if v.m > report.best_m {
            report.best_m = v.m;
            report.worst_chain = c;
        }
    }
    report.satisfied = report.best_m <= m_cap;
    Ok(report)
}

/// w3 over every chain of the tree with `|X_n| ≥ ρ|X_0|`.
pub fn w3_check(tree: &FiltrationTree, p: f64, sigma: f64, rho: f64, m_cap: f64) -> Result<ConditionReport> {
    check_rho(rho)?;
    let chains = chains_with_threshold(tree, rho);
    let mut report = ConditionReport {
        condition: "w3",
        best_m: 0.0,
        worst_chain: Chain {
            atoms: vec![tree.root()],
        },
        rho,
        m_cap,
        satisfied: true,
        sampled: false,
        chains_checked: chains.len(),
        worst_blocks: None,
    };
    for c in chains {
        let (v, b, g) = w3_chain_max(tree, &c, p, sigma)?;
        if v > report.best_m || report.worst_blocks.is_none() {
            report.best_m = v;
            report.worst_chain = c;
            report.worst_blocks = Some((b, g));
        }
    }
    report.satisfied = report.best_m <= m_cap;
    Ok(report)
}

/// Chain filtration of `[0, 1)`: `X_i` splits into a piece of measure
/// `pieces[i]` (listed first) and `X_{i+1}`. The last atom keeps the rest.
pub fn build_chain_tree(pieces: &[f64]) -> Result<(FiltrationTree, Chain)> {
    if pieces.is_empty() {
        return Err(param("a chain needs at least one piece"));
    }
    let total: f64 = pieces.iter().sum();
    if pieces.iter().any(|&x| !(x > 0.0)) || !(total < 1.0) {
        return Err(param(format!(
            "infeasible measures: pieces must be positive with sum below 1, got sum {total}"
        )));
    }
    check_capacity("leaves", pieces.len() + 1)?;
    let mut b = TreeBuilder::new(Mode::Binary);
    let mut atoms = vec![0usize];
    let mut cur = 0;
    let mut left = 1.0;
    for &x in pieces {
        left -= x;
        let kids = b.split(cur, &[x, left]);
        cur = kids[1];
        atoms.push(cur);
    }
    Ok((b.finish()?, Chain { atoms }))
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(param("slope needs at least two positive pairs"));
    }
    Ok(log_log_slope(xs, ys))
}

// ---------------------------------------------------------------------------
// chain counterexample

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Section2Report {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: usize,
    pub p: f64,
    pub tau: f64,
    pub beta: f64,
    /// `‖f‖_p = |X_0∖X_n|^{1/p}`.
    pub lp_norm: f64,
    /// ℓ^τ norm of the p-normalized coefficients of `f`.
    pub ell_tau: f64,
    /// `ell_tau / lp_norm`.
    pub ratio: f64,
    /// `(Σ_i |X_i'|^{τ/p})^{1/τ} / ‖f‖_p`.
    pub chain_ratio: f64,
    /// `(‖1_{X_0}‖_p^τ + ‖1_{X_n}‖_p^τ)^{1/τ}`, the two-term dictionary cost.
    pub dictionary_ell_tau: f64,
}

#[derive(Clone, Debug)]
pub struct Section2Chain {
    pub tree: FiltrationTree,
    pub chain: Chain,
    pub f: LeafFunction,
    pub report: Section2Report,
}

/// Chain of `n = ⌈(2^{1/p}N)^{1/β}⌉` pieces of measure `1/(2n)` with
/// survivor `|X_n| = 1/2`, and `f = 1_{X_0∖X_n}`.
pub fn gen_section2_chain(big_n: usize, p: f64, tau: f64) -> Result<Section2Chain> {
    if big_n < 1 {
        return Err(param("N must be at least 1"));
    }
    let vp = VariationParams::new(tau, p)?;
    let target = (2f64.powf(1.0 / p) * big_n as f64).powf(1.0 / vp.beta);
    if !(target < (crate::filtration::leaf_capacity() as f64)) {
        return Err(Error::Capacity {
            what: "leaves",
            requested: if target.is_finite() { target as usize } else { usize::MAX },
            limit: crate::filtration::leaf_capacity(),
        });
    }
    // guard against 2.0000000000000004 rounding up
    let n = ((target * (1.0 - 1e-12)).ceil() as usize).max(1);
    let (tree, chain) = build_chain_tree(&vec![1.0 / (2.0 * n as f64); n])?;
    let f = LeafFunction::indicator(&tree, whole(&chain));
    let space = LocalSpace::constants(&tree);
    let system = LocalSystem::build(&tree, &space)?;
    let q = approx_quasinorm(&system, &f, ApproxNormParams::special(tau, p)?)?;
    let ell_tau = q.ell_tau.expect("tau set");
    let lp_norm = f.norm_p(&tree, p);
    let chain_ratio = w2star_eval(&tree, &space, &chain, p, tau)?.m;
    let last = *chain.atoms.last().expect("nonempty");
    let dictionary_ell_tau = (1.0 + tree.measure(last).powf(tau / p)).powf(1.0 / tau);
    Ok(Section2Chain {
        report: Section2Report {
            big_n,
            n,
            p,
            tau,
            beta: vp.beta,
            lp_norm,
            ell_tau,
            ratio: ell_tau / lp_norm,
            chain_ratio,
            dictionary_ell_tau,
        },
        tree,
        chain,
        f,
    })
}

// ---------------------------------------------------------------------------
// tensor square

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorReport {
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub sigma: f64,
    pub p: f64,
    /// `|f|_V` on the binary refinement.
    pub var_fine: f64,
    /// `|f|_V` on the rectangle tree.
    pub var_coarse: f64,
    /// `(Σ E_p(f, M_{j,m} ∪ M_{j,m+1})^σ)^{1/σ}` over the merged atoms.
    pub merged_lower: f64,
    /// `K^{1/σ}`.
    pub target: f64,
    pub fine_meets_target: bool,
}

#[derive(Clone, Debug)]
pub struct TensorExample {
    pub trees: TensorTrees,
    pub f: LeafFunction,
    pub fine: VariationResult,
    pub coarse: VariationResult,
    pub report: TensorReport,
}

/// Pairs `(M_{j,m}, M_{j,m+1})` of coarse atoms for `j = 1..=K`: the two
/// lowest cells of the leftmost child column of each rectangle in the
/// rightmost column at level `j − 1`.
pub fn tensor_pairs(trees: &TensorTrees, k: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for j in 1..=k.min(trees.depth) {
        let last_col = (trees.n1 as u64).pow(j as u32 - 1) - 1;
        let mut at: Vec<usize> = (0..trees.cells.len())
            .filter(|&a| trees.cells[a].0 == j - 1 && trees.cells[a].1 == last_col)
            .collect();
        at.sort_by_key(|&a| trees.cells[a].2);
        for a in at {
            let kids = trees.coarse.children(a);
            out.push((j, kids[0], kids[1]));
        }
    }
    out
}

/// `f = Σ_{j≤K} α_j(Σ_{m odd} 1_{M_{j,m}} − Σ_{m even} 1_{M_{j,m}})` with
/// `α_j = n1^{j/p} n2^{j(1/p−1/σ)}`, and both variation seminorms.
pub fn gen_tensor_example(n1: usize, n2: usize, k: usize, sigma: f64, p: f64) -> Result<TensorExample> {
    let vp = VariationParams::new(sigma, p)?;
    if k < 1 {
        return Err(param("K must be at least 1"));
    }
    let trees = build_tensor_square(n1, n2, k)?;
    if trees.coarse.leaf_ids() != trees.fine.leaf_ids() {
        return Err(Error::InvalidTree("binary refinement reorders the leaves".into()));
    }
    let coarse = &trees.coarse;
    let mut f = LeafFunction::zeros(coarse.leaf_count());
    let pairs = tensor_pairs(&trees, k);
    for &(j, a, b) in &pairs {
        let alpha = (n1 as f64).powf(j as f64 / p) * (n2 as f64).powf(j as f64 * (1.0 / p - 1.0 / sigma));
        f.axpy(alpha, &LeafFunction::indicator(coarse, Ring::atom(a)));
        f.axpy(-alpha, &LeafFunction::indicator(coarse, Ring::atom(b)));
    }
    let fine_space = LocalSpace::constants(&trees.fine);
    let mut lower = 0.0;
    for &(_, a, _) in &pairs {
        let fa = trees
            .fine
            .atom_by_label(coarse.label(a))
            .expect("labels are kept by the refinement");
        let merged = trees.fine.parent(fa).expect("merged atom");
        let e = best_lp(&trees.fine, &fine_space, &f, Ring::atom(merged), p)?.error;
        lower += e.powf(sigma);
    }
    let fine = var_seminorm(&trees.fine, &fine_space, &f, vp)?;
    let coarse_var = var_seminorm(coarse, &LocalSpace::constants(coarse), &f, vp)?;
    let target = (k as f64).powf(1.0 / sigma);
    let report = TensorReport {
        n1,
        n2,
        k,
        sigma,
        p,
        var_fine: fine.seminorm,
        var_coarse: coarse_var.seminorm,
        merged_lower: lower.powf(1.0 / sigma),
        target,
        fine_meets_target: fine.seminorm >= target,
    };
    Ok(TensorExample {
        trees,
        f,
        fine,
        coarse: coarse_var,
        report,
    })
}

// ---------------------------------------------------------------------------
// fractal

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FractalReport {
    pub n: usize,
    pub nu: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub sigma: f64,
    pub p: f64,
    /// `‖f_j‖_p^p` for `j = 1..=J`.
    pub fj_p: Vec<f64>,
    /// `2n^{j(1−p/σ)}/ν`.
    pub fj_p_expected: Vec<f64>,
    /// `Σ_j Σ_𝐤 E_p(φ, K_{(𝐤,n+1)} ∪ K_{(𝐤,n+2)})^σ` on the binary tree.
    pub binary_lower: f64,
    /// `(2/ν)^{σ/p}·J`.
    pub binary_lower_expected: f64,
    /// `|φ|_V^σ` on the binary tree.
    pub binary_var: f64,
    /// `|φ|_V^σ` on the ν-ary tree.
    pub nary_var: f64,
    /// `max ‖φ‖_{L^p(K_𝐤)}^σ / (n^{−s}(1 − 1/n))` over diagonal atoms.
    pub diag_constant: f64,
    /// `Σ |R ∩ Δ|` over the ν-ary witness.
    pub witness_diag_mass: f64,
    /// `|φ|_V^σ ≤ diag_constant · witness_diag_mass`.
    pub within_budget: bool,
}

#[derive(Clone, Debug)]
pub struct FractalExample {
    pub trees: FractalTrees,
    pub phi: LeafFunction,
    pub nary: VariationResult,
    pub report: FractalReport,
}

fn diag_mass(tree: &FiltrationTree, r: Ring) -> f64 {
    let d = |a| tree.diag(a).unwrap_or(0.0);
    d(r.outer) - r.inner.map_or(0.0, d)
}

/// `φ_J = Σ_{j≤J} α_j Σ_{𝐤∈Γ_j^*} (1_{K_{(𝐤,n+1)}} − 1_{K_{(𝐤,n+2)}})`
/// with `α_j = ν^{j/p} n^{−j/σ}` on the word tree of depth `J + 1`.
pub fn gen_fractal_function(n: usize, nu: usize, j_max: usize, sigma: f64, p: f64) -> Result<FractalExample> {
    let vp = VariationParams::new(sigma, p)?;
    let trees = build_fractal_tree(n, nu, j_max + 1)?;
    let nary = &trees.nary;
    let mut phi = LeafFunction::zeros(nary.leaf_count());
    let mut fj_p = Vec::with_capacity(j_max);
    let mut fj_p_expected = Vec::with_capacity(j_max);
    let mut pairs = Vec::new();
    for j in 1..=j_max {
        let alpha = (nu as f64).powf(j as f64 / p) * (n as f64).powf(-(j as f64) / sigma);
        let mut fj = LeafFunction::zeros(nary.leaf_count());
        for a in 0..nary.atom_count() {
            if trees.words[a].len() != j || !trees.is_diagonal(a) {
                continue;
            }
            let kids = nary.children(a);
            let (plus, minus) = (kids[n], kids[n + 1]);
            fj.axpy(alpha, &LeafFunction::indicator(nary, Ring::atom(plus)));
            fj.axpy(-alpha, &LeafFunction::indicator(nary, Ring::atom(minus)));
            pairs.push(plus);
        }
        fj_p.push(fj.norm_p(nary, p).powf(p));
        fj_p_expected.push(2.0 * (n as f64).powf(j as f64 * (1.0 - p / sigma)) / nu as f64);
        phi = &phi + &fj;
    }
    let binary = &trees.binary;
    let bspace = LocalSpace::constants(binary);
    let mut binary_lower = 0.0;
    for &a in &pairs {
        let ba = binary.atom_by_label(nary.label(a)).expect("labels are kept");
        let merged = binary.parent(ba).expect("merged atom");
        let e = best_lp(binary, &bspace, &phi, Ring::atom(merged), p)?.error;
        if e > 0.0 {
            binary_lower += e.powf(sigma);
        }
    }
    let binary_var = var_seminorm(binary, &bspace, &phi, vp)?.seminorm.powf(sigma);
    let nspace = LocalSpace::constants(nary);
    let nres = var_seminorm(nary, &nspace, &phi, vp)?;
    let mut diag_constant: f64 = 0.0;
    for a in 0..nary.atom_count() {
        if !trees.is_diagonal(a) || nary.is_leaf(a) {
            continue;
        }
        let s = trees.words[a].len() as f64;
        let budget = (n as f64).powf(-s) * (1.0 - 1.0 / n as f64);
        let mass = phi.norm_p_on(nary, Ring::atom(a), p);
        if mass > 0.0 {
            diag_constant = diag_constant.max(mass.powf(sigma) / budget);
        }
    }
    let witness_diag_mass: f64 = nres.witness.iter().map(|&r| diag_mass(nary, r)).sum();
    let nary_var = nres.seminorm.powf(sigma);
    let report = FractalReport {
        n,
        nu,
        j: j_max,
        sigma,
        p,
        fj_p,
        fj_p_expected,
        binary_lower,
        binary_lower_expected: (2.0 / nu as f64).powf(sigma / p) * j_max as f64,
        binary_var,
        nary_var,
        diag_constant,
        witness_diag_mass,
        within_budget: nary_var <= diag_constant * witness_diag_mass * (1.0 + 1e-9) + 1e-15,
    };
    Ok(FractalExample {
        phi,
        nary: nres,
        report,
        trees,
    })
}

// ---------------------------------------------------------------------------
// Rademacher functions

/// `r_j` on the uniform dyadic tree of the given depth: `+1` on the left
/// half of each level-`(j−1)` interval, `−1` on the right half.
pub fn rademacher(tree: &FiltrationTree, depth: usize, j: usize) -> Result<LeafFunction> {
    if tree.leaf_count() != 1usize << depth {
        return Err(param("tree is not the dyadic tree of the stated depth"));
    }
    if j == 0 || j > depth {
        return Err(param(format!("Rademacher index {j} outside 1..={depth}")));
    }
    let vals = (0..tree.leaf_count())
        .map(|l| {
            if (tree.leaf_position(l) >> (depth - j)) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(LeafFunction::new(vals))
}

/// `Σ_{j∈Λ} 2^{−jβ} r_j` on an existing dyadic tree.
pub fn rademacher_sum(tree: &FiltrationTree, depth: usize, lambda: &[usize], beta: f64) -> Result<LeafFunction> {
    let mut f = LeafFunction::zeros(tree.leaf_count());
    for &j in lambda {
        if j == 0 || j >= depth {
            return Err(param(format!("index {j} of Λ outside 1..{depth}")));
        }
        f.axpy(2f64.powf(-(j as f64) * beta), &rademacher(tree, depth, j)?);
    }
    Ok(f)
}

/// `f_Λ = Σ_{j∈Λ} 2^{−jβ} r_j` on the dyadic tree of the given depth.
pub fn gen_rademacher(
    lambda: &[usize],
    depth: usize,
    sigma: f64,
    p: f64,
) -> Result<(FiltrationTree, LeafFunction)> {
    let vp = VariationParams::new(sigma, p)?;
    if let Some(&j) = lambda.iter().find(|&&j| j == 0 || j >= depth) {
        return Err(param(format!("index {j} of Λ outside 1..{depth}")));
    }
    let tree = build_dyadic_interval(depth)?;
    let f = rademacher_sum(&tree, depth, lambda, vp.beta)?;
    Ok((tree, f))
}

/// `|f_Λ − f_Γ|_{V_{σ,p}}`.
pub fn rademacher_distance(
    tree: &FiltrationTree,
    depth: usize,
    lambda: &[usize],
    gamma: &[usize],
    params: VariationParams,
) -> Result<f64> {
    let a = rademacher_sum(tree, depth, lambda, params.beta)?;
    let b = rademacher_sum(tree, depth, gamma, params.beta)?;
    Ok(var_seminorm(tree, &LocalSpace::constants(tree), &(&a - &b), params)?.seminorm)
}

// ---------------------------------------------------------------------------
// failure of w3 and the greedy counterexample

/// Chain data of the w3 counterexample.
#[derive(Clone, Debug, PartialEq)]
pub struct NotW3Instance {
    pub chain: Chain,
    /// `Λ_i`.
    pub blocks: Vec<Vec<usize>>,
    /// `Γ_i ⊆ Λ_i`.
    pub subsets: Vec<Vec<usize>>,
    /// `R_i = X_{λ_i} \ X_{λ_{i+1}}`.
    pub rings: Vec<Ring>,
    /// `Q_i` as the union of its pieces.
    pub q: Vec<Vec<Ring>>,
    /// `γ = |X_0∖X_n| / |X_n|`.
    pub gamma: f64,
    /// Coefficients `a_j` of `f = Σ a_j h_j`.
    pub a: Vec<f64>,
}

impl NotW3Instance {
    fn new(tree: &FiltrationTree, chain: Chain, blocks: Vec<Vec<usize>>, subsets: Vec<Vec<usize>>) -> Self {
        let rings = blocks
            .iter()
            .map(|b| Ring {
                outer: chain.atoms[b[0]],
                inner: Some(chain.atoms[b[b.len() - 1] + 1]),
            })
            .collect();
        let q = subsets
            .iter()
            .map(|g| g.iter().map(|&j| piece(&chain, j)).collect())
            .collect();
        let last = *chain.atoms.last().expect("nonempty");
        let gamma = tree.ring_measure(whole(&chain)) / tree.measure(last);
        NotW3Instance {
            chain,
            blocks,
            subsets,
            rings,
            q,
            gamma,
            a: Vec::new(),
        }
    }

    /// `h_j`: `1` on `X_j \ X_{j+1}`, `−|X_j∖X_{j+1}|/|X_{j+1}|` on `X_{j+1}`.
    pub fn haar(&self, tree: &FiltrationTree, j: usize) -> LeafFunction {
        let s = piece(&self.chain, j);
        let next = self.chain.atoms[j + 1];
        let mut h = LeafFunction::indicator(tree, s);
        h.axpy(-tree.ring_measure(s) / tree.measure(next), &LeafFunction::indicator(tree, Ring::atom(next)));
        h
    }
}

/// The chain `X_ℓ = [ℓ/(4n), 1)`, `ℓ = 0..=2n`, with `Λ_i = {2i, 2i+1}` and
/// `Γ_i = {2i}`.
pub fn w3_quarter_instance(n: usize) -> Result<(FiltrationTree, NotW3Instance)> {
    if n < 1 {
        return Err(param("n must be at least 1"));
    }
    let (tree, chain) = build_chain_tree(&vec![1.0 / (4.0 * n as f64); 2 * n])?;
    let blocks = (0..n).map(|i| vec![2 * i, 2 * i + 1]).collect();
    let subsets = (0..n).map(|i| vec![2 * i]).collect();
    let inst = NotW3Instance::new(&tree, chain, blocks, subsets);
    Ok((tree, inst))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NotW3Report {
    pub n: usize,
    pub p: f64,
    pub sigma: f64,
    pub beta: f64,
    /// Measures of the even and odd pieces.
    pub t: f64,
    pub s: f64,
    pub survivor: f64,
    pub gamma: f64,
    pub mean_f: f64,
    pub a_min: f64,
    pub a_max: f64,
    /// `1 ≤ a_j ≤ 1+γ` and `−γ ≤ Σ_{j≤ℓ} a_j h_j ≤ 0` on `X_{ℓ+1}`.
    pub coefficient_bounds_hold: bool,
    /// Largest p-normalized odd coefficient and smallest even one.
    pub max_odd: f64,
    pub min_even: f64,
    /// `𝒢_n` selects exactly the even pieces.
    pub greedy_is_even: bool,
    pub var_f: f64,
    pub var_greedy: f64,
    pub ratio: f64,
    /// `|X_0∖X_{2n}|^{1/p}`.
    pub ring_scale: f64,
    pub w3_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct NotW3Example {
    pub tree: FiltrationTree,
    pub f: LeafFunction,
    pub instance: NotW3Instance,
    pub greedy: LeafFunction,
    pub report: NotW3Report,
}

/// [`gen_notw3_greedy_with`] with survivor `|X_{2n}| = ρ` for the default ρ.
pub fn gen_notw3_greedy(n: usize, p: f64, sigma: f64) -> Result<NotW3Example> {
    gen_notw3_greedy_with(n, p, sigma, DEFAULT_RHO)
}

/// Chain of `2n` pieces alternating `t, s` with `t^{1/p} = 2s^{1/p}` above
/// a survivor `X_{2n}` of the given measure, `f = 1_{X_0∖X_{2n}} − γ1_{X_{2n}}`,
/// and the greedy approximant `𝒢_n f`.
pub fn gen_notw3_greedy_with(n: usize, p: f64, sigma: f64, survivor: f64) -> Result<NotW3Example> {
    let vp = VariationParams::new(sigma, p)?;
    if n < 2 {
        return Err(param("n must be at least 2"));
    }
    if !(survivor > 0.0 && survivor < 1.0) {
        return Err(param(format!(
            "infeasible measures: survivor {survivor} leaves no room for the pieces"
        )));
    }
    let s = (1.0 - survivor) / (n as f64 * (1.0 + 2f64.powf(p)));
    let t = 2f64.powf(p) * s;
    let pieces: Vec<f64> = (0..2 * n).map(|j| if j % 2 == 0 { t } else { s }).collect();
    let (tree, chain) = build_chain_tree(&pieces)?;
    let blocks: Vec<Vec<usize>> = (0..n).map(|i| vec![2 * i, 2 * i + 1]).collect();
    let subsets: Vec<Vec<usize>> = (0..n).map(|i| vec![2 * i]).collect();
    let mut inst = NotW3Instance::new(&tree, chain, blocks, subsets);
    let gamma = inst.gamma;
    let last = *inst.chain.atoms.last().expect("nonempty");
    let mut f = LeafFunction::indicator(&tree, whole(&inst.chain));
    f.axpy(-gamma, &LeafFunction::indicator(&tree, Ring::atom(last)));

    // Haar coefficients and the partial-sum bounds
    let tol = 1e-12;
    let mut bounds = true;
    let mut partial = LeafFunction::zeros(tree.leaf_count());
    for j in 0..2 * n {
        let h = inst.haar(&tree, j);
        let a = f.inner(&tree, &h) / h.inner(&tree, &h);
        bounds &= a >= 1.0 - tol && a <= 1.0 + gamma + tol;
        partial.axpy(a, &h);
        let next = inst.chain.atoms[j + 1];
        for &l in &tree.dfs_leaves()[tree.span(next)] {
            let v = partial.values()[l];
            bounds &= v >= -gamma - tol && v <= tol;
        }
        inst.a.push(a);
    }
    bounds &= partial.max_abs_diff(&f) <= 1e-12;

    let space = LocalSpace::constants(&tree);
    let system = LocalSystem::build(&tree, &space)?;
    let st = GreedyState::new(&system, &f, p)?;
    let piece_of = |e: usize| -> Option<usize> {
        let el = system.element(e);
        if el.level == 0 {
            None
        } else {
            inst.chain.atoms.iter().position(|&a| a == el.support)
        }
    };
    let (mut max_odd, mut min_even) = (0.0f64, f64::INFINITY);
    for e in 0..system.len() {
        if let Some(j) = piece_of(e) {
            let c = st.coeffs()[e].abs();
            if j % 2 == 0 {
                min_even = min_even.min(c);
            } else {
                max_odd = max_odd.max(c);
            }
        }
    }
    let picked: HashSet<Option<usize>> = st.order()[..n].iter().map(|&e| piece_of(e)).collect();
    let even: HashSet<Option<usize>> = (0..n).map(|i| Some(2 * i)).collect();
    let greedy = st.approximant(n);
    let var_f = var_seminorm(&tree, &space, &f, vp)?.seminorm;
    let var_greedy = var_seminorm(&tree, &space, &greedy, vp)?.seminorm;
    let w3_ratio = w3_eval(&tree, &inst.chain, &inst.blocks, &inst.subsets, p, sigma)?;
    let report = NotW3Report {
        n,
        p,
        sigma,
        beta: vp.beta,
        t,
        s,
        survivor: tree.measure(last),
        gamma,
        mean_f: f.mean(&tree),
        a_min: inst.a.iter().copied().fold(f64::INFINITY, f64::min),
        a_max: inst.a.iter().copied().fold(0.0, f64::max),
        coefficient_bounds_hold: bounds,
        max_odd,
        min_even,
        greedy_is_even: picked == even,
        var_f,
        var_greedy,
        ratio: var_greedy / var_f,
        ring_scale: tree.ring_measure(whole(&inst.chain)).powf(1.0 / p),
        w3_ratio,
    };
    Ok(NotW3Example {
        tree,
        f,
        instance: inst,
        greedy,
        report,
    })
}

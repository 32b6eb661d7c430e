//! Greedy and weak block-greedy approximation in the p-normalized system,
//! approximation-space quasi-norms and K-functional attainment reports.
//!
//! `σ_n(f, Φ)` is approximated throughout by `‖f − 𝒢_n f‖_p`, which is
//! exact up to the greedy constant of the basis.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{param, Result};
use crate::filtration::FiltrationTree;
use crate::local_basis::{LeafFunction, LocalSpace, LocalSystem};
use crate::variation::{var_seminorm, VariationParams};

/// The decreasing rearrangement of the p-normalized coefficients of `f`.
#[derive(Clone, Debug)]
pub struct GreedyState<'a> {
    system: &'a LocalSystem,
    p: f64,
    norms: Vec<f64>,
    /// p-normalized coefficients `c_j‖φ_j‖_p`.
    coeffs: Vec<f64>,
    /// `k_1, k_2, …` with `|c_{k_1}| ≥ |c_{k_2}| ≥ ⋯`, ties by index.
    order: Vec<usize>,
}

impl<'a> GreedyState<'a> {
    pub fn new(system: &'a LocalSystem, f: &LeafFunction, p: f64) -> Result<Self> {
        let pn = system.p_normalize(p)?;
        let coeffs = pn.coefficients(f);
        let mut order: Vec<usize> = (0..coeffs.len()).collect();
        order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
        Ok(GreedyState {
            system,
            p,
            norms: pn.norms().to_vec(),
            coeffs,
            order,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `|c_{k_1}|, |c_{k_2}|, …`.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.order.iter().map(|&j| self.coeffs[j].abs()).collect()
    }

    /// `𝒢_m f`; `m` beyond the system size gives `f`.
    pub fn approximant(&self, m: usize) -> LeafFunction {
        let m = m.min(self.order.len());
        self.system
            .reconstruct_subset(self.order[..m].iter().map(|&j| (j, self.coeffs[j] / self.norms[j])))
    }

    /// `‖f − 𝒢_m f‖_p` for `m = 0, 1, …, len`, by peeling one term at a time.
    pub fn errors(&self, tree: &FiltrationTree, f: &LeafFunction) -> Vec<f64> {
        let mut r = f.dfs_values(tree);
        let w: Vec<f64> = tree.dfs_leaves().iter().map(|&l| tree.leaf_weights()[l]).collect();
        let norm = |r: &[f64]| -> f64 {
            r.iter()
                .zip(&w)
                .map(|(x, w)| w * x.abs().powf(self.p))
                .sum::<f64>()
                .powf(1.0 / self.p)
        };
        let mut out = Vec::with_capacity(self.order.len() + 1);
        out.push(norm(&r));
        for &j in &self.order {
            let e = self.system.element(j);
            let c = self.coeffs[j] / self.norms[j];
            for (i, x) in e.values.iter().enumerate() {
                r[e.start + i] -= c * x;
            }
            out.push(norm(&r));
        }
        out
    }
}

/// `𝒢_m f`.
pub fn greedy(system: &LocalSystem, f: &LeafFunction, m: usize, p: f64) -> Result<LeafFunction> {
    Ok(GreedyState::new(system, f, p)?.approximant(m))
}

/// Level blocks `Γ_j` with `μ_j(f)` and a weak greedy order.
#[derive(Clone, Debug)]
pub struct BlockGreedyState<'a> {
    system: &'a LocalSystem,
    coeffs: Vec<f64>,
    /// Element ranges of the nonempty levels.
    pub blocks: Vec<Range<usize>>,
    /// `max_{n∈Γ_j} |c_n|` with p-normalized coefficients.
    pub mu: Vec<f64>,
    pub t: f64,
    /// Block indices `j_1, j_2, …`.
    pub order: Vec<usize>,
}

impl<'a> BlockGreedyState<'a> {
    /// Exact descending sort of `μ_j`, ties by level.
    pub fn new(system: &'a LocalSystem, f: &LeafFunction, p: f64, t: f64) -> Result<Self> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(param(format!("weakness parameter must be in (0, 1], got {t}")));
        }
        let pn = system.p_normalize(p)?;
        let coeffs = pn.coefficients(f);
        let blocks: Vec<Range<usize>> = (0..system.level_count())
            .map(|n| system.level(n))
            .filter(|r| !r.is_empty())
            .collect();
        let mu: Vec<f64> = blocks
            .iter()
            .map(|r| coeffs[r.clone()].iter().fold(0.0f64, |m, c| m.max(c.abs())))
            .collect();
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]).then(a.cmp(&b)));
        Ok(BlockGreedyState {
            system,
            coeffs: pn.to_l2(&coeffs),
            blocks,
            mu,
            t,
            order,
        })
    }

    /// `min_{ℓ≤k} μ_{j_ℓ} ≥ t·max_{ℓ>k} μ_{j_ℓ}` for every `k`.
    pub fn is_weak_order(&self, order: &[usize]) -> bool {
        let mut seen = vec![false; self.blocks.len()];
        if order.len() != self.blocks.len() || order.iter().any(|&j| j >= seen.len() || std::mem::replace(&mut seen[j], true)) {
            return false;
        }
        let n = order.len();
        let mut suffix_max = vec![0.0f64; n + 1];
        for k in (0..n).rev() {
            suffix_max[k] = suffix_max[k + 1].max(self.mu[order[k]]);
        }
        let mut prefix_min = f64::INFINITY;
        for k in 0..n {
            prefix_min = prefix_min.min(self.mu[order[k]]);
            if prefix_min < self.t * suffix_max[k + 1] * (1.0 - 1e-12) {
                return false;
            }
        }
        true
    }

    /// Replaces the order by one with random adjacent inversions that keep
    /// the weak-order inequality.
    pub fn perturb(&mut self, swaps: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if self.order.len() < 2 {
            return;
        }
        for _ in 0..swaps {
            let i = rng.gen_range(0..self.order.len() - 1);
            let mut cand = self.order.clone();
            cand.swap(i, i + 1);
            if self.is_weak_order(&cand) {
                self.order = cand;
            }
        }
    }

    /// Number of blocks with `μ_j > 0`.
    pub fn nonzero_blocks(&self) -> usize {
        self.mu.iter().filter(|&&m| m > 0.0).count()
    }

    /// `B_k f = Σ_{ℓ≤k} W_{j_ℓ} f`.
    pub fn approximant(&self, k: usize) -> LeafFunction {
        let k = k.min(self.order.len());
        self.system.reconstruct_subset(
            self.order[..k]
                .iter()
                .flat_map(|&j| self.blocks[j].clone())
                .map(|n| (n, self.coeffs[n])),
        )
    }
}

/// `B_k f` in the exact descending order.
pub fn block_greedy(system: &LocalSystem, f: &LeafFunction, k: usize, t: f64, p: f64) -> Result<LeafFunction> {
    Ok(BlockGreedyState::new(system, f, p, t)?.approximant(k))
}

/// Parameters of `𝒜_q^α`; `q = ∞` is allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ApproxNormParams {
    pub alpha: f64,
    pub q: f64,
    pub p: f64,
    /// Set when `α = 1/τ − 1/p` and `q = τ`.
    pub tau: Option<f64>,
}

impl ApproxNormParams {
    pub fn new(alpha: f64, q: f64, p: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(param(format!("alpha must be positive, got {alpha}")));
        }
        if !(q > 0.0) {
            return Err(param(format!("q must be in (0, ∞], got {q}")));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(param(format!("p must be in (0, ∞), got {p}")));
        }
        Ok(ApproxNormParams { alpha, q, p, tau: None })
    }

    /// `α = 1/τ − 1/p`, `q = τ`.
    pub fn special(tau: f64, p: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < p) {
            return Err(param(format!("need 0 < tau < p, got tau={tau}, p={p}")));
        }
        let mut out = Self::new(1.0 / tau - 1.0 / p, tau, p)?;
        out.tau = Some(tau);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuasiNorm {
    /// `‖(2^{j(α+1/p)} a_{2^j})_j‖_{ℓ^q}`.
    pub value: f64,
    /// `‖(c_n)‖_{ℓ^τ}` when `params.tau` is set.
    pub ell_tau: Option<f64>,
}

/// Quasi-norm from coefficient magnitudes in any order.
pub fn coefficient_quasinorm(coeffs: &[f64], params: ApproxNormParams) -> QuasiNorm {
    let mut a: Vec<f64> = coeffs.iter().map(|c| c.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let s = params.alpha + 1.0 / params.p;
    let terms = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= a.len())
        .enumerate()
        .map(|(j, k)| 2f64.powf(j as f64 * s) * a[k - 1]);
    let value = if params.q.is_infinite() {
        terms.fold(0.0, f64::max)
    } else {
        terms.map(|x| x.powf(params.q)).sum::<f64>().powf(1.0 / params.q)
    };
    let ell_tau = params
        .tau
        .map(|tau| a.iter().map(|x| x.powf(tau)).sum::<f64>().powf(1.0 / tau));
    QuasiNorm { value, ell_tau }
}

/// `‖f‖_{𝒜_q^α}` on the coefficient side.
pub fn approx_quasinorm(system: &LocalSystem, f: &LeafFunction, params: ApproxNormParams) -> Result<QuasiNorm> {
    let pn = system.p_normalize(params.p)?;
    Ok(coefficient_quasinorm(&pn.coefficients(f), params))
}

/// One row of the greedy K-attainment table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KAttainmentRow {
    pub n: usize,
    /// `‖f − 𝒢_n f‖_p`.
    pub err_p: f64,
    /// `n^{−α}‖𝒢_n f‖_{𝒜_q^α}`.
    pub quasinorm_term: f64,
    pub sum: f64,
    /// Minimum over candidates `g` of `‖f − g‖_p + n^{−α}‖g‖_{𝒜_q^α}`.
    pub k_upper: f64,
    pub ratio: f64,
}

/// Worst-case constants of the three conditions equivalent to greedy
/// K-attainment, measured with `𝒴 = V_{σ,p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LemmaConstants {
    /// `max n^β‖f − 𝒢_n f‖_p / |f|_V`.
    pub c1: f64,
    /// `max |𝒢_n f|_V / (n^β‖𝒢_n f‖_p)`.
    pub c2: f64,
    /// `max |𝒢_n f|_V / |f|_V`.
    pub c3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KAttainmentReport {
    pub rows: Vec<KAttainmentRow>,
    pub lemma: Option<LemmaConstants>,
}

impl KAttainmentReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,err_p,quasinorm_term,sum,K_upper,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n, r.err_p, r.quasinorm_term, r.sum, r.k_upper, r.ratio
            ));
        }
        s
    }
}

const LAMBDA_GRID: usize = 12;

/// Greedy K-attainment for `(L^p, 𝒜_q^α)` at `t = n^{−α}`. Candidates are
/// `0` and every `𝒢_m f`, refined by `λ𝒢_m f` for `λ ∈ {1/8, …, 12/8}`.
/// With `variation`, the lemma constants for `V_{σ,p}` are added.
pub fn k_attainment_report(
    tree: &FiltrationTree,
    system: &LocalSystem,
    f: &LeafFunction,
    params: ApproxNormParams,
    ns: &[usize],
    variation: Option<(&LocalSpace, VariationParams)>,
) -> Result<KAttainmentReport> {
    let p = params.p;
    let st = GreedyState::new(system, f, p)?;
    let errs = st.errors(tree, f);
    let mags = st.magnitudes();
    let quasi: Vec<f64> = (0..=mags.len())
        .map(|m| coefficient_quasinorm(&mags[..m], params).value)
        .collect();
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(param("n must be at least 1"));
        }
        let t = (n as f64).powf(-params.alpha);
        let nn = n.min(mags.len());
        let err_p = errs[nn];
        let quasinorm_term = t * quasi[nn];
        let sum = err_p + quasinorm_term;
        let (mut best, mut arg) = (f64::INFINITY, 0);
        for m in 0..=mags.len() {
            let v = errs[m] + t * quasi[m];
            if v < best {
                best = v;
                arg = m;
            }
        }
        if arg > 0 {
            let g = st.approximant(arg);
            for k in 1..=LAMBDA_GRID {
                let lam = k as f64 / 8.0;
                let v = (f - &g.scaled(lam)).norm_p(tree, p) + t * lam * quasi[arg];
                best = best.min(v);
            }
        }
        rows.push(KAttainmentRow {
            n,
            err_p,
            quasinorm_term,
            sum,
            k_upper: best,
            ratio: if sum > 0.0 { best / sum } else { 1.0 },
        });
    }
    let lemma = match variation {
        None => None,
        Some((space, vp)) => {
            let fv = var_seminorm(tree, space, f, vp)?.seminorm;
            let (mut c1, mut c2, mut c3) = (0.0f64, 0.0f64, 0.0f64);
            for &n in ns {
                let nb = (n as f64).powf(vp.beta);
                let g = st.approximant(n);
                let gv = var_seminorm(tree, space, &g, vp)?.seminorm;
                let gn = g.norm_p(tree, p);
                if fv > 0.0 {
                    c1 = c1.max(nb * errs[n.min(mags.len())] / fv);
                    c3 = c3.max(gv / fv);
                }
                if gn > 0.0 {
                    c2 = c2.max(gv / (nb * gn));
                }
            }
            Some(LemmaConstants { c1, c2, c3 })
        }
    };
    Ok(KAttainmentReport { rows, lemma })
}

/// One row of the three-term chain `‖f−𝒢_n f‖ + n^{−α}·{𝒜_∞, V, 𝒜_q}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmbeddingRow {
    pub n: usize,
    pub err_p: f64,
    pub with_a_inf: f64,
    pub with_var: f64,
    pub with_a_q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub seminorm: f64,
    /// `‖f‖_{𝒜_q^α}` with `q = min(σ, 2)`.
    pub a_q: f64,
    pub a_inf: f64,
    /// `|f|_V / ‖f‖_{𝒜_q^α}`.
    pub var_over_a_q: f64,
    /// `‖f‖_{𝒜_∞^α} / ‖f‖_V` with the full norm `‖f‖_p + |f|_V`.
    pub a_inf_over_var: f64,
    pub chain: Vec<EmbeddingRow>,
}

/// Embedding ratios between `V_{σ,p}` and `𝒜_q^α`, `α = 1/σ − 1/p`.
pub fn embedding_report(
    tree: &FiltrationTree,
    space: &LocalSpace,
    system: &LocalSystem,
    f: &LeafFunction,
    params: VariationParams,
    ns: &[usize],
) -> Result<EmbeddingReport> {
    let p = params.p;
    let alpha = params.beta;
    let aq = ApproxNormParams::new(alpha, params.sigma.min(2.0), p)?;
    let ainf = ApproxNormParams::new(alpha, f64::INFINITY, p)?;
    let st = GreedyState::new(system, f, p)?;
    let v = var_seminorm(tree, space, f, params)?;
    let a_q = coefficient_quasinorm(st.coeffs(), aq).value;
    let a_inf = coefficient_quasinorm(st.coeffs(), ainf).value;
    let errs = st.errors(tree, f);
    let mags = st.magnitudes();
    let mut chain = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(param("n must be at least 1"));
        }
        let t = (n as f64).powf(-alpha);
        let nn = n.min(mags.len());
        let g = st.approximant(nn);
        let gv = var_seminorm(tree, space, &g, params)?.seminorm;
        let e = errs[nn];
        chain.push(EmbeddingRow {
            n,
            err_p: e,
            with_a_inf: e + t * coefficient_quasinorm(&mags[..nn], ainf).value,
            with_var: e + t * gv,
            with_a_q: e + t * coefficient_quasinorm(&mags[..nn], aq).value,
        });
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(EmbeddingReport {
        seminorm: v.seminorm,
        a_q,
        a_inf,
        var_over_a_q: ratio(v.seminorm, a_q),
        a_inf_over_var: ratio(a_inf, v.full_norm),
        chain,
    })
}

/// Finite truncations of the four sequences `2^{nγ}·(…)`, `n = 0..levels`,
/// whose `ℓ^κ` memberships are equivalent: K-functional upper bounds for
/// `𝒜_ρ^α` and `V_{σ,p}`, and the greedy sums for both.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KEquivSequences {
    pub gamma: f64,
    pub k_approx: Vec<f64>,
    pub greedy_approx: Vec<f64>,
    pub k_var: Vec<f64>,
    pub greedy_var: Vec<f64>,
}

impl KEquivSequences {
    /// `ℓ^κ` norms of the four truncated sequences.
    pub fn ell_kappa(&self, kappa: f64) -> [f64; 4] {
        let norm = |s: &[f64]| {
            if kappa.is_infinite() {
                s.iter().fold(0.0f64, |m, x| m.max(*x))
            } else {
                s.iter().map(|x| x.powf(kappa)).sum::<f64>().powf(1.0 / kappa)
            }
        };
        [
            norm(&self.k_approx),
            norm(&self.greedy_approx),
            norm(&self.k_var),
            norm(&self.greedy_var),
        ]
    }
}

/// The four sequences for `0 < γ < α`, using `2^n`-term greedy approximants.
pub fn k_equiv_sequences(
    tree: &FiltrationTree,
    space: &LocalSpace,
    system: &LocalSystem,
    f: &LeafFunction,
    params: VariationParams,
    alpha: f64,
    rho: f64,
    gamma: f64,
    levels: usize,
) -> Result<KEquivSequences> {
    if !(gamma > 0.0 && gamma < alpha && alpha < params.beta) {
        return Err(param(format!(
            "need 0 < gamma < alpha < beta, got gamma={gamma}, alpha={alpha}, beta={}",
            params.beta
        )));
    }
    let p = params.p;
    let ap = ApproxNormParams::new(alpha, rho, p)?;
    let ns: Vec<usize> = (0..=levels).map(|n| 1usize << n).collect();
    let rep = k_attainment_report(tree, system, f, ap, &ns, None)?;
    let st = GreedyState::new(system, f, p)?;
    let errs = st.errors(tree, f);
    let cands = crate::variation::default_candidates(tree, space, f, params)?;
    let mut out = KEquivSequences {
        gamma,
        k_approx: Vec::new(),
        greedy_approx: Vec::new(),
        k_var: Vec::new(),
        greedy_var: Vec::new(),
    };
    for (i, row) in rep.rows.iter().enumerate() {
        let w = 2f64.powf(i as f64 * gamma);
        let t = 2f64.powf(-(i as f64) * alpha);
        out.k_approx.push(w * row.k_upper);
        out.greedy_approx.push(w * row.sum);
        let n = ns[i].min(errs.len() - 1);
        let gv = var_seminorm(tree, space, &st.approximant(n), params)?.seminorm;
        out.greedy_var.push(w * (errs[n] + t * gv));
        // t = 2^{−nα} = s^β with s = t^{1/β}
        let k = crate::variation::k_upper(tree, f, t.powf(1.0 / params.beta), params, &cands)?;
        out.k_var.push(w * k.0);
    }
    Ok(out)
}

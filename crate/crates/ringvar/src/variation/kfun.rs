use serde::Serialize;

use super::{var_seminorm, ModulusCurve, VariationParams};
use crate::error::{param, Result};
use crate::filtration::FiltrationTree;
use crate::greedy::GreedyState;
use crate::local_basis::{project_level, LeafFunction, LocalSpace, LocalSystem};
use crate::splitting::partition_approximants;

/// A candidate `g` with `‖f − g‖_p` and `|g|_V` precomputed.
#[derive(Clone, Debug)]
pub struct KCandidate {
    pub label: String,
    pub g: LeafFunction,
    pub dist: f64,
    pub seminorm: f64,
}

impl KCandidate {
    pub fn new(
        tree: &FiltrationTree,
        space: &LocalSpace,
        f: &LeafFunction,
        g: LeafFunction,
        params: VariationParams,
        label: impl Into<String>,
    ) -> Result<Self> {
        let seminorm = var_seminorm(tree, space, &g, params)?.seminorm;
        Ok(KCandidate {
            label: label.into(),
            dist: (f - &g).norm_p(tree, params.p),
            g,
            seminorm,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KFunctionalResult {
    pub t: f64,
    /// Upper bound on `K(f, t^β; L^p(S), V_{σ,p})`.
    pub upper: f64,
    /// `𝒲_S(f, t)_{σ,p}`.
    pub lower_proxy: f64,
    pub best_label: String,
}

fn powers_of_two_below(n: usize) -> impl Iterator<Item = usize> {
    std::iter::successors(Some(1usize), |k| k.checked_mul(2)).take_while(move |&k| k < n)
}

/// `0`, `f`, `P_μ f` for `μ = 2^k − 1` and the last level, greedy
/// approximants `𝒢_m f` and best piecewise approximants with `m` terms for
/// `m = 1, 2, 4, …`.
pub fn default_candidates(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    params: VariationParams,
) -> Result<Vec<KCandidate>> {
    let mut gs: Vec<(String, LeafFunction)> = vec![
        ("zero".into(), LeafFunction::zeros(tree.leaf_count())),
        ("f".into(), f.clone()),
    ];
    let splits = tree.split_count();
    let mut levels: Vec<usize> = powers_of_two_below(splits + 1).map(|k| k - 1).collect();
    levels.push(splits);
    levels.dedup();
    for mu in levels {
        gs.push((format!("P_{mu}"), project_level(tree, space, f, mu as isize)?));
    }
    if let Ok(system) = LocalSystem::build(tree, space) {
        let st = GreedyState::new(&system, f, params.p)?;
        for m in powers_of_two_below(system.len()) {
            gs.push((format!("G_{m}"), st.approximant(m)));
        }
    }
    let budgets: Vec<usize> = powers_of_two_below(2 * tree.leaf_count()).collect();
    for pa in partition_approximants(tree, space, f, params.p, &budgets)? {
        gs.push((format!("piecewise_{}", pa.budget), pa.g));
    }
    gs.into_iter()
        .map(|(label, g)| KCandidate::new(tree, space, f, g, params, label))
        .collect()
}

const LAMBDA_GRID: usize = 12;

/// `min_g ‖f − g‖_p + t^β|g|_V` over the candidates, refined on the best one
/// by `λg` for `λ ∈ {1/8, …, 12/8}`. Returns the value and a label.
pub fn k_upper(
    tree: &FiltrationTree,
    f: &LeafFunction,
    t: f64,
    params: VariationParams,
    candidates: &[KCandidate],
) -> Result<(f64, String)> {
    if candidates.is_empty() {
        return Err(param("the candidate set is empty"));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(param(format!("t must be positive, got {t}")));
    }
    let tb = t.powf(params.beta);
    let best = candidates
        .iter()
        .min_by(|a, b| (a.dist + tb * a.seminorm).total_cmp(&(b.dist + tb * b.seminorm)))
        .expect("nonempty");
    let mut value = best.dist + tb * best.seminorm;
    let mut label = best.label.clone();
    for k in 1..=LAMBDA_GRID {
        let lam = k as f64 / 8.0;
        if k == 8 {
            continue;
        }
        let v = (f - &best.g.scaled(lam)).norm_p(tree, params.p) + tb * lam * best.seminorm;
        if v < value {
            value = v;
            label = format!("{lam}*{}", best.label);
        }
    }
    Ok((value, label))
}

/// K-functional upper bound with the modulus as lower proxy, at every `t`.
/// The modulus table is built once.
pub fn k_functional(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    ts: &[f64],
    params: VariationParams,
    candidates: &[KCandidate],
) -> Result<Vec<KFunctionalResult>> {
    let curve = ModulusCurve::new(tree, space, f, params)?;
    ts.iter()
        .map(|&t| {
            let (upper, best_label) = k_upper(tree, f, t, params, candidates)?;
            Ok(KFunctionalResult {
                t,
                upper,
                lower_proxy: curve.eval(t).0,
                best_label,
            })
        })
        .collect()
}

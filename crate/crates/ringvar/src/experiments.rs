//! Reproducible experiment suites with tabular output.
//!
//! Every suite resolves its defaults into the [`ExperimentConfig`] it
//! echoes, so feeding the echo back reproduces the table byte for byte.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{param, Result};
use crate::filtration::{build_dyadic_interval, build_random_tree, FiltrationTree, Ring};
use crate::geometry::{
    gen_fractal_function, gen_notw3_greedy, gen_section2_chain, gen_tensor_example, loglog_slope,
    rademacher_distance,
};
use crate::greedy::{embedding_report, k_attainment_report, ApproxNormParams};
use crate::local_basis::{LeafFunction, LocalSpace, LocalSystem};
use crate::splitting::jackson_approximant;
use crate::variation::{default_candidates, k_functional, var_seminorm, VariationParams};

pub const SUITES: [&str; 10] = [
    "section2",
    "tensor",
    "fractal",
    "rademacher",
    "notw3",
    "jackson",
    "bernstein",
    "kfun",
    "embeddings",
    "temlyakov",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Parameters of one run. Unset fields take per-suite defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
    pub tau: Option<f64>,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub eps: Option<f64>,
    pub depth: Option<usize>,
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    #[serde(rename = "N")]
    pub big_n: Option<usize>,
    pub n: Option<usize>,
    pub nu: Option<usize>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub output: Option<String>,
    pub format: Format,
}

fn fill<T: Copy>(slot: &mut Option<T>, v: T) -> T {
    *slot.get_or_insert(v)
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>) -> Self {
        ExperimentConfig {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fills every parameter the suite reads and validates the domains.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let (sigma, p) = match c.name.as_str() {
            "section2" => {
                fill(&mut c.big_n, 8);
                (fill(&mut c.tau, 1.0), fill(&mut c.p, 2.0))
            }
            "tensor" => {
                fill(&mut c.n1, 2);
                fill(&mut c.n2, 2);
                fill(&mut c.k, 5);
                (fill(&mut c.sigma, 1.0), fill(&mut c.p, 2.0))
            }
            "fractal" => {
                fill(&mut c.n, 3);
                fill(&mut c.nu, 5);
                fill(&mut c.k, 5);
                (fill(&mut c.sigma, 1.0), fill(&mut c.p, 2.0))
            }
            "rademacher" => {
                fill(&mut c.depth, 14);
                fill(&mut c.k, 6);
                (fill(&mut c.sigma, 1.0), fill(&mut c.p, 2.0))
            }
            "notw3" => {
                fill(&mut c.big_n, 32);
                (fill(&mut c.sigma, 1.0), fill(&mut c.p, 2.0))
            }
            "jackson" => {
                fill(&mut c.depth, 8);
                fill(&mut c.trials, 50);
                fill(&mut c.k, 16);
                (fill(&mut c.sigma, 1.0), fill(&mut c.p, 2.0))
            }
            "bernstein" => {
                fill(&mut c.trials, 200);
                fill(&mut c.n, 16);
                fill(&mut c.depth, 256);
                (1.0, 2.0)
            }
            "kfun" => {
                fill(&mut c.depth, 8);
                fill(&mut c.trials, 20);
                fill(&mut c.k, 8);
                (fill(&mut c.sigma, 1.0), fill(&mut c.p, 2.0))
            }
            "embeddings" => {
                fill(&mut c.depth, 6);
                fill(&mut c.trials, 20);
                fill(&mut c.n, 64);
                fill(&mut c.q, 1.0);
                (fill(&mut c.tau, 1.0), fill(&mut c.p, 2.0))
            }
            "temlyakov" => {
                fill(&mut c.depth, 8);
                fill(&mut c.trials, 30);
                fill(&mut c.k, 40);
                (1.0, fill(&mut c.p, 2.0))
            }
            other => {
                return Err(param(format!(
                    "unknown experiment '{other}', expected one of {}",
                    SUITES.join(", ")
                )))
            }
        };
        VariationParams::new(sigma, p)?;
        for (name, v) in [
            ("depth", c.depth),
            ("K", c.k),
            ("N", c.big_n),
            ("n", c.n),
            ("trials", c.trials),
        ] {
            if v == Some(0) {
                return Err(param(format!("{name} must be positive")));
            }
        }
        if c.name != "bernstein" && c.depth.is_some_and(|d| d > 24) {
            return Err(param("depth must be at most 24"));
        }
        Ok(c)
    }
}

/// One pass/fail verdict against a stated threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

/// Named numeric columns of equal length plus the run's metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub columns: Vec<(String, Vec<f64>)>,
    pub checks: Vec<Check>,
    pub config: ExperimentConfig,
    pub version: &'static str,
    pub runtime_ms: u128,
}

impl ResultTable {
    fn new(config: &ExperimentConfig) -> Self {
        let cols = columns_of(&config.name);
        ResultTable {
            name: config.name.clone(),
            columns: cols.iter().map(|(c, _)| (c.to_string(), Vec::new())).collect(),
            checks: Vec::new(),
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION"),
            runtime_ms: 0,
        }
    }

    fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        for (c, v) in self.columns.iter_mut().zip(row) {
            c.1.push(*v);
        }
    }

    fn check(&mut self, name: &str, passed: bool, value: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            value,
            threshold,
        });
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.0.as_str()))
            .expect("in-memory write");
        for i in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| format!("{}", c.1[i])))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Columns, checks and config echo; runtimes only on request since
    /// they differ between runs.
    pub fn to_json(&self, with_runtime: bool) -> String {
        let cols: serde_json::Map<String, serde_json::Value> = self
            .columns
            .iter()
            .map(|(n, v)| (n.clone(), json!(v)))
            .collect();
        let mut v = json!({
            "name": self.name,
            "version": self.version,
            "config": self.config,
            "columns": cols,
            "checks": self.checks,
            "passed": self.passed(),
        });
        if with_runtime {
            v["runtime_ms"] = json!(self.runtime_ms as u64);
        }
        serde_json::to_string_pretty(&v).expect("table serializes")
    }

    pub fn checks_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}: {} (threshold {})\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold
                )
            })
            .collect()
    }
}

const COLUMNS: &[(&str, &[(&str, &str)])] = &[
    (
        "section2",
        &[
            ("N", "target factor"),
            ("n", "number of chain pieces"),
            ("lp_norm", "‖f‖_p"),
            ("ell_tau", "ℓ^τ norm of the p-normalized coefficients"),
            ("ratio", "ell_tau / lp_norm"),
            ("chain_ratio", "(Σ|X_i'|^{τ/p})^{1/τ} / ‖f‖_p"),
        ],
    ),
    (
        "tensor",
        &[
            ("K", "number of levels"),
            ("var_fine", "|f|_V on the binary refinement"),
            ("var_coarse", "|f|_V on the rectangle tree"),
            ("merged_lower", "explicit lower bound from the merged atoms"),
            ("target", "K^{1/σ}"),
            ("meets_target", "1 if var_fine ≥ target"),
        ],
    ),
    (
        "fractal",
        &[
            ("J", "number of levels"),
            ("binary_lower", "Σ E_p^σ over the merged atoms"),
            ("binary_lower_expected", "(2/ν)^{σ/p}·J"),
            ("binary_var", "|φ|_V^σ on the binary tree"),
            ("nary_var", "|φ|_V^σ on the ν-ary tree"),
            ("diag_constant", "max ‖φ‖_{L^p(K)}^σ / (n^{−s}(1−1/n)) over diagonal atoms"),
            ("witness_diag_mass", "Σ |R ∩ Δ| over the ν-ary witness"),
            ("within_budget", "1 if nary_var ≤ diag_constant·witness_diag_mass"),
        ],
    ),
    (
        "rademacher",
        &[
            ("lambda", "bit mask of Λ (bit j−1 for level j)"),
            ("gamma", "bit mask of Γ"),
            ("distance", "|f_Λ − f_Γ|_V"),
        ],
    ),
    (
        "notw3",
        &[
            ("n", "number of even/odd piece pairs"),
            ("var_f", "|f|_V"),
            ("var_greedy", "|𝒢_n f|_V"),
            ("ratio", "var_greedy / var_f"),
            ("greedy_is_even", "1 if 𝒢_n picks exactly the even pieces"),
            ("max_odd", "largest p-normalized odd coefficient"),
            ("min_even", "smallest p-normalized even coefficient"),
            ("a_min", "min a_j"),
            ("a_max", "max a_j"),
            ("gamma", "γ"),
            ("bounds_hold", "1 if the coefficient and partial-sum bounds hold"),
            ("w3_ratio", "w3 ratio of the instance"),
        ],
    ),
    (
        "jackson",
        &[
            ("trial", "random function index"),
            ("m", "Jackson parameter"),
            ("seminorm", "|f|_V"),
            ("error", "‖f − g‖_p"),
            ("bound", "(2ν)^{1/p} m^{−β} |f|_V"),
            ("card", "partition size"),
            ("card_limit", "2νm"),
        ],
    ),
    (
        "bernstein",
        &[
            ("trial", "random function index"),
            ("sigma", "σ"),
            ("p", "p"),
            ("n", "number of dictionary terms"),
            ("leaves", "leaves of the random tree"),
            ("seminorm", "|g|_V"),
            ("lp_norm", "‖g‖_p"),
            ("ratio", "|g|_V / (n^β ‖g‖_p)"),
        ],
    ),
    (
        "kfun",
        &[
            ("trial", "random function index"),
            ("t", "t"),
            ("upper", "K-functional upper bound at t^β"),
            ("lower_proxy", "modulus 𝒲_S(f, t)"),
            ("ratio", "upper / lower_proxy"),
        ],
    ),
    (
        "embeddings",
        &[
            ("trial", "random function index"),
            ("n", "number of greedy terms"),
            ("err_p", "‖f − 𝒢_n f‖_p"),
            ("quasinorm_term", "n^{−α}‖𝒢_n f‖_{𝒜}"),
            ("sum", "err_p + quasinorm_term"),
            ("k_upper", "K-functional upper bound"),
            ("ratio", "k_upper / sum"),
            ("var_over_a_q", "|f|_V / ‖f‖_{𝒜_q^α}"),
            ("a_inf_over_var", "‖f‖_{𝒜_∞^α} / ‖f‖_V"),
        ],
    ),
    (
        "temlyakov",
        &[
            ("p", "p"),
            ("card", "size of the index set"),
            ("ratio", "‖Σ ψ_j‖_p / card^{1/p}"),
        ],
    ),
];

fn columns_of(name: &str) -> &'static [(&'static str, &'static str)] {
    COLUMNS
        .iter()
        .find(|c| c.0 == name)
        .map(|c| c.1)
        .expect("suite has columns")
}

/// Column documentation of every suite.
pub fn manifest() -> String {
    let v: serde_json::Map<String, serde_json::Value> = COLUMNS
        .iter()
        .map(|(name, cols)| {
            let cs: Vec<_> = cols.iter().map(|(c, d)| json!({"column": c, "meaning": d})).collect();
            (name.to_string(), json!(cs))
        })
        .collect();
    serde_json::to_string_pretty(&v).expect("manifest serializes")
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_fn(n: usize, rng: &mut ChaCha8Rng) -> LeafFunction {
    LeafFunction::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

fn band(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = xs
        .into_iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    hi / lo
}

/// Runs a suite.
pub fn experiment_suite(config: &ExperimentConfig) -> Result<ResultTable> {
    let c = config.resolved()?;
    let start = Instant::now();
    let mut t = ResultTable::new(&c);
    match c.name.as_str() {
        "section2" => section2(&c, &mut t)?,
        "tensor" => tensor(&c, &mut t)?,
        "fractal" => fractal(&c, &mut t)?,
        "rademacher" => rademacher(&c, &mut t)?,
        "notw3" => notw3(&c, &mut t)?,
        "jackson" => jackson(&c, &mut t)?,
        "bernstein" => bernstein(&c, &mut t)?,
        "kfun" => kfun(&c, &mut t)?,
        "embeddings" => embeddings(&c, &mut t)?,
        "temlyakov" => temlyakov(&c, &mut t)?,
        _ => unreachable!("resolved() rejects unknown names"),
    }
    t.runtime_ms = start.elapsed().as_millis();
    Ok(t)
}

fn u(x: Option<usize>) -> usize {
    x.expect("resolved")
}

fn f(x: Option<f64>) -> f64 {
    x.expect("resolved")
}

fn powers_of_two(from: usize, to: usize) -> Vec<usize> {
    std::iter::successors(Some(from), |k| k.checked_mul(2))
        .take_while(|&k| k <= to)
        .collect()
}

fn section2(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let ns = {
        let v = powers_of_two(2, u(c.big_n));
        if v.is_empty() {
            vec![1]
        } else {
            v
        }
    };
    let mut ok = true;
    let mut worst = f64::INFINITY;
    for big_n in ns {
        let r = gen_section2_chain(big_n, f(c.p), f(c.tau))?.report;
        ok &= r.ratio >= big_n as f64;
        worst = worst.min(r.ratio / big_n as f64);
        t.push(&[big_n as f64, r.n as f64, r.lp_norm, r.ell_tau, r.ratio, r.chain_ratio]);
    }
    t.check("ratio >= N", ok, worst, 1.0);
    Ok(())
}

fn tensor(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let kmax = u(c.k);
    let ks: Vec<usize> = if kmax >= 2 { (2..=kmax).collect() } else { vec![1] };
    let mut ok = true;
    let mut worst = f64::INFINITY;
    let mut coarse = Vec::new();
    for k in ks {
        let r = gen_tensor_example(u(c.n1), u(c.n2), k, f(c.sigma), f(c.p))?.report;
        ok &= r.fine_meets_target;
        worst = worst.min(r.var_fine / r.target);
        coarse.push(r.var_coarse);
        t.push(&[k as f64, r.var_fine, r.var_coarse, r.merged_lower, r.target, b(r.fine_meets_target)]);
    }
    t.check("var_fine >= K^(1/sigma)", ok, worst, 1.0);
    let bd = band(coarse);
    t.check("max/min var_coarse <= 3", bd <= 3.0, bd, 3.0);
    Ok(())
}

fn fractal(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let (mut exact, mut budget, mut mass) = (true, true, 0.0f64);
    let mut dev = 0.0f64;
    for j in 1..=u(c.k) {
        let r = gen_fractal_function(u(c.n), u(c.nu), j, f(c.sigma), f(c.p))?.report;
        let d = (r.binary_lower - r.binary_lower_expected).abs() / r.binary_lower_expected;
        dev = dev.max(d);
        exact &= d <= 1e-9;
        budget &= r.within_budget;
        mass = mass.max(r.witness_diag_mass);
        t.push(&[
            j as f64,
            r.binary_lower,
            r.binary_lower_expected,
            r.binary_var,
            r.nary_var,
            r.diag_constant,
            r.witness_diag_mass,
            b(r.within_budget),
        ]);
    }
    t.check("binary lower bound exact (relative)", exact, dev, 1e-9);
    t.check("witness diagonal mass <= 1", mass <= 1.0 + 1e-12, mass, 1.0);
    t.check("nary variation within diagonal budget", budget, b(budget), 1.0);
    Ok(())
}

fn subset(mask: usize) -> Vec<usize> {
    (0..usize::BITS as usize).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect()
}

fn rademacher(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let depth = u(c.depth);
    let levels = u(c.k);
    if levels >= depth || levels > 16 {
        return Err(param(format!("K = {levels} levels need K < depth and K <= 16")));
    }
    let vp = VariationParams::new(f(c.sigma), f(c.p))?;
    let tree = build_dyadic_interval(depth)?;
    let total = 1usize << levels;
    let pairs: Vec<(usize, usize)> = (0..total)
        .flat_map(|a| (a + 1..total).map(move |b| (a, b)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| rademacher_distance(&tree, depth, &subset(a), &subset(b), vp))
        .collect::<Result<_>>()?;
    let (mut min_d, mut sup) = (f64::INFINITY, 0.0f64);
    for (&(a, bb), &d) in pairs.iter().zip(&dists) {
        min_d = min_d.min(d);
        if a == 0 {
            sup = sup.max(d);
        }
        t.push(&[a as f64, bb as f64, d]);
    }
    t.check("pairwise distance >= 0.2", min_d >= 0.2, min_d, 0.2);
    t.check("sup |f_Lambda|_V <= 10", sup <= 10.0, sup, 10.0);
    Ok(())
}

fn notw3(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let ns = powers_of_two(4, u(c.big_n).max(8));
    let (sigma, p) = (f(c.sigma), f(c.p));
    let beta = 1.0 / sigma - 1.0 / p;
    let (mut even, mut bounds, mut mean) = (true, true, 0.0f64);
    let mut ratios = Vec::new();
    for &n in &ns {
        let r = gen_notw3_greedy(n, p, sigma)?.report;
        even &= r.greedy_is_even;
        bounds &= r.coefficient_bounds_hold;
        mean = mean.max(r.mean_f.abs());
        ratios.push(r.ratio);
        t.push(&[
            n as f64,
            r.var_f,
            r.var_greedy,
            r.ratio,
            b(r.greedy_is_even),
            r.max_odd,
            r.min_even,
            r.a_min,
            r.a_max,
            r.gamma,
            b(r.coefficient_bounds_hold),
            r.w3_ratio,
        ]);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&xs, &ratios)?;
    let rel = (slope - beta).abs() / beta;
    t.check("log-log slope within 15% of beta", rel <= 0.15, slope, beta);
    t.check("greedy selects exactly the even pieces", even, b(even), 1.0);
    t.check("coefficient bounds", bounds, b(bounds), 1.0);
    t.check("mean of f is zero", mean <= 1e-12, mean, 1e-12);
    Ok(())
}

fn jackson(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let vp = VariationParams::new(f(c.sigma), f(c.p))?;
    let tree = build_dyadic_interval(u(c.depth))?;
    let space = LocalSpace::constants(&tree);
    let ms = powers_of_two(1, u(c.k));
    let rows: Vec<Vec<[f64; 7]>> = (0..u(c.trials))
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(c.seed, i);
            let g = random_fn(tree.leaf_count(), &mut rng);
            ms.iter()
                .map(|&m| {
                    let j = jackson_approximant(&tree, &space, &g, m, vp)?;
                    Ok([
                        i as f64,
                        m as f64,
                        j.seminorm,
                        j.error,
                        j.bound,
                        j.split.partition.len() as f64,
                        (2 * tree.nu() * m) as f64,
                    ])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let (mut err_ok, mut card_ok, mut worst) = (true, true, 0.0f64);
    for r in rows.iter().flatten() {
        err_ok &= r[3] <= r[4] * (1.0 + 1e-12);
        card_ok &= r[5] <= r[6];
        if r[4] > 0.0 {
            worst = worst.max(r[3] / r[4]);
        }
        t.push(r);
    }
    t.check("error <= (2nu)^(1/p) m^-beta |f|_V", err_ok, worst, 1.0);
    t.check("card <= 2 nu m", card_ok, b(card_ok), 1.0);
    Ok(())
}

/// `g = Σ_{k≤n} c_k 1_{A_k}` for random atoms of a random tree.
pub fn random_dictionary_sum(tree: &FiltrationTree, n: usize, rng: &mut ChaCha8Rng) -> LeafFunction {
    let mut g = LeafFunction::zeros(tree.leaf_count());
    for _ in 0..n {
        let a = rng.gen_range(0..tree.atom_count());
        g.axpy(rng.gen_range(-2.0..2.0), &LeafFunction::indicator(tree, Ring::atom(a)));
    }
    g
}

const BERNSTEIN_PARAMS: [(f64, f64); 3] = [(1.0, 2.0), (0.5, 1.5), (1.0, 4.0)];

fn bernstein(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let max_leaves = u(c.depth).max(4);
    let rows: Vec<[f64; 8]> = (0..u(c.trials))
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(c.seed, i);
            let (sigma, p) = BERNSTEIN_PARAMS[i % 3];
            let vp = VariationParams::new(sigma, p)?;
            let nu = rng.gen_range(2..=3);
            let splits = rng.gen_range(1..=(max_leaves - 1) / (nu - 1));
            let tree = build_random_tree(splits, nu, rng.gen())?;
            let n = rng.gen_range(1..=u(c.n));
            let g = random_dictionary_sum(&tree, n, &mut rng);
            let v = var_seminorm(&tree, &LocalSpace::constants(&tree), &g, vp)?;
            let bound = (n as f64).powf(vp.beta) * v.lp_norm;
            Ok([
                i as f64,
                sigma,
                p,
                n as f64,
                tree.leaf_count() as f64,
                v.seminorm,
                v.lp_norm,
                if bound > 0.0 { v.seminorm / bound } else { 0.0 },
            ])
        })
        .collect::<Result<_>>()?;
    let mut ok = true;
    let mut worst = 0.0f64;
    for r in &rows {
        let bound = r[3].powf(1.0 / r[1] - 1.0 / r[2]) * r[6];
        ok &= r[5] <= bound + 1e-9;
        worst = worst.max(r[7]);
        t.push(r);
    }
    t.check("|g|_V <= n^beta ||g||_p + 1e-9", ok, worst, 1.0);
    Ok(())
}

fn kfun(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let vp = VariationParams::new(f(c.sigma), f(c.p))?;
    let tree = build_dyadic_interval(u(c.depth))?;
    let space = LocalSpace::constants(&tree);
    let ts: Vec<f64> = (1..=u(c.k)).map(|k| 2f64.powi(-(k as i32))).collect();
    let rows: Vec<Vec<[f64; 5]>> = (0..u(c.trials))
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(c.seed, i);
            let g = random_fn(tree.leaf_count(), &mut rng);
            let cands = default_candidates(&tree, &space, &g, vp)?;
            let res = k_functional(&tree, &space, &g, &ts, vp, &cands)?;
            Ok(res
                .iter()
                .map(|r| [i as f64, r.t, r.upper, r.lower_proxy, r.upper / r.lower_proxy])
                .collect())
        })
        .collect::<Result<_>>()?;
    for r in rows.iter().flatten() {
        t.push(r);
    }
    let bd = band(rows.iter().flatten().map(|r| r[4]));
    t.check("max/min K_upper/W <= 50", bd <= 50.0, bd, 50.0);
    Ok(())
}

fn embeddings(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let (tau, p) = (f(c.tau), f(c.p));
    let tree = build_dyadic_interval(u(c.depth))?;
    let space = LocalSpace::constants(&tree);
    let system = LocalSystem::build(&tree, &space)?;
    let ap = ApproxNormParams::new(1.0 / tau - 1.0 / p, f(c.q), p)?;
    let vp = VariationParams::new(tau, p)?;
    let ns: Vec<usize> = (1..=u(c.n)).collect();
    let rows: Vec<(Vec<[f64; 9]>, f64)> = (0..u(c.trials))
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(c.seed, i);
            let g = random_fn(tree.leaf_count(), &mut rng);
            let rep = k_attainment_report(&tree, &system, &g, ap, &ns, None)?;
            let emb = embedding_report(&tree, &space, &system, &g, vp, &[1])?;
            let rs: Vec<[f64; 9]> = rep
                .rows
                .iter()
                .map(|r| {
                    [
                        i as f64,
                        r.n as f64,
                        r.err_p,
                        r.quasinorm_term,
                        r.sum,
                        r.k_upper,
                        r.ratio,
                        emb.var_over_a_q,
                        emb.a_inf_over_var,
                    ]
                })
                .collect();
            let bd = band(rs.iter().map(|r| r[6]));
            Ok((rs, bd))
        })
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for (rs, bd) in &rows {
        worst = worst.max(*bd);
        for r in rs {
            t.push(r);
        }
    }
    t.check("K-attainment band <= 10 per function", worst <= 10.0, worst, 10.0);
    Ok(())
}

const TEMLYAKOV_PS: [f64; 3] = [1.5, 2.0, 4.0];

fn temlyakov(c: &ExperimentConfig, t: &mut ResultTable) -> Result<()> {
    let tree = build_dyadic_interval(u(c.depth))?;
    let system = LocalSystem::build(&tree, &LocalSpace::constants(&tree))?;
    let mut ps = vec![f(c.p)];
    ps.extend(TEMLYAKOV_PS.iter().filter(|&&q| q != f(c.p)));
    let mut worst = 0.0f64;
    for p in ps {
        let pn = system.p_normalize(p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ p.to_bits());
        let mut ratios = Vec::new();
        for _ in 0..u(c.trials) {
            let k = rng.gen_range(1..=u(c.k).min(system.len()));
            let mut idx: Vec<usize> = (0..k).map(|_| rng.gen_range(0..system.len())).collect();
            idx.sort_unstable();
            idx.dedup();
            let r = pn.temlyakov_ratio(&tree, &idx);
            ratios.push(r);
            t.push(&[p, idx.len() as f64, r]);
        }
        worst = worst.max(band(ratios));
    }
    t.check("max/min ratio <= 20 per p", worst <= 20.0, worst, 20.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(name);
        c.seed = 7;
        match name {
            "rademacher" => {
                c.depth = Some(8);
                c.k = Some(3);
            }
            "jackson" | "kfun" | "embeddings" => {
                c.depth = Some(5);
                c.trials = Some(2);
                c.n = Some(8);
                c.k = Some(4);
            }
            "bernstein" => {
                c.trials = Some(6);
                c.depth = Some(40);
            }
            "temlyakov" => c.trials = Some(5),
            "tensor" | "fractal" => c.k = Some(3),
            "notw3" => c.big_n = Some(8),
            _ => {}
        }
        c
    }

    #[test]
    fn every_suite_runs_and_is_deterministic() {
        for name in SUITES {
            let c = small(name);
            let a = experiment_suite(&c).unwrap();
            let b = experiment_suite(&c).unwrap();
            assert_eq!(a.to_csv(), b.to_csv(), "{name}");
            assert_eq!(a.to_json(false), b.to_json(false), "{name}");
            assert!(a.rows() > 0, "{name}");
            assert!(!a.checks.is_empty(), "{name}");
            let w = a.columns[0].1.len();
            assert!(a.columns.iter().all(|c| c.1.len() == w));
        }
    }

    #[test]
    fn echo_reproduces_the_table() {
        let a = experiment_suite(&small("jackson")).unwrap();
        let echo = ExperimentConfig::from_json(&a.config.to_json()).unwrap();
        assert_eq!(echo, a.config);
        let b = experiment_suite(&echo).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn json_mirrors_csv() {
        let a = experiment_suite(&small("section2")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&a.to_json(false)).unwrap();
        let text = a.to_csv();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        for (i, rec) in rdr.records().enumerate() {
            for (h, x) in headers.iter().zip(rec.unwrap().iter()) {
                let j = v["columns"][h][i].as_f64().unwrap();
                assert_eq!(j, x.parse::<f64>().unwrap());
            }
        }
    }

    #[test]
    fn validation() {
        assert!(experiment_suite(&ExperimentConfig::new("nope")).is_err());
        let mut c = ExperimentConfig::new("jackson");
        c.sigma = Some(3.0);
        assert!(experiment_suite(&c).is_err());
        let mut c = ExperimentConfig::new("jackson");
        c.trials = Some(0);
        assert!(experiment_suite(&c).is_err());
        let m: serde_json::Value = serde_json::from_str(&manifest()).unwrap();
        for name in SUITES {
            assert!(m[name].is_array());
        }
    }

    #[test]
    fn bernstein_default_parameter_cycle() {
        let c = small("bernstein");
        let t = experiment_suite(&c).unwrap();
        assert!(t.passed(), "{}", t.checks_text());
        let sig = t.column("sigma").unwrap();
        assert_eq!(&sig[..3], &[1.0, 0.5, 1.0]);
    }
}

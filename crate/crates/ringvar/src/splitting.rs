//! Splitting Ω by a superadditive set function, Jackson-type approximants
//! and partition-based upper bounds for best n-term approximation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::filtration::{AtomId, FiltrationTree, Ring};
use crate::local_basis::{LeafFunction, LocalSpace};
use crate::lp_approx::{check_bound, check_p, RingEvaluator};
use crate::variation::{var_seminorm, RingTable, VariationParams};

/// Absolute slack of the superadditivity spot check.
pub const SUPERADDITIVITY_TOL: f64 = 1e-9;

/// A nonnegative function on atoms and rings.
pub struct SetFunction<'a> {
    eval: Box<dyn Fn(Ring) -> f64 + Sync + 'a>,
    superadditive: bool,
}

impl<'a> SetFunction<'a> {
    pub fn new(eval: impl Fn(Ring) -> f64 + Sync + 'a) -> Self {
        SetFunction {
            eval: Box::new(eval),
            superadditive: false,
        }
    }

    /// `φ(K) = |K|`.
    pub fn measure(tree: &'a FiltrationTree) -> Self {
        Self::new(move |r| tree.ring_measure(r))
    }

    /// `φ(K) = E_p(f, K)^p`, tabulated for every atom and ring.
    pub fn lp_error(tree: &'a FiltrationTree, space: &LocalSpace, f: &LeafFunction, p: f64) -> Result<Self> {
        check_bound(tree, space, f)?;
        check_p(p)?;
        let frame = space.frame(tree);
        let fd = f.dfs_values(tree);
        let table = RingTable::build(tree, &frame, &fd, p, false)?;
        Ok(Self::new(move |r| {
            let e = table.err(tree, r);
            if e == 0.0 {
                0.0
            } else {
                e.powf(p)
            }
        }))
    }

    pub fn value(&self, r: Ring) -> f64 {
        (self.eval)(r)
    }

    pub fn is_superadditive(&self) -> bool {
        self.superadditive
    }

    /// Checks `φ(K₁) + φ(K₂) ≤ φ(K₁ ∪ K₂)` on random splittings of rings
    /// `A \ B = (A \ C) ∪ (C \ B)` and atoms `A = (A \ C) ∪ C`.
    pub fn check_superadditive(&mut self, tree: &FiltrationTree, samples: usize, seed: u64) -> Result<()> {
        let outers: Vec<AtomId> = (0..tree.atom_count())
            .filter(|&a| !tree.descendants(a).is_empty())
            .collect();
        if outers.is_empty() {
            self.superadditive = true;
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let a = outers[rng.gen_range(0..outers.len())];
            let desc = tree.descendants(a);
            let c = desc[rng.gen_range(0..desc.len())];
            let below = tree.descendants(c);
            let b = if below.is_empty() || rng.gen_bool(0.3) {
                None
            } else {
                Some(below[rng.gen_range(0..below.len())])
            };
            let k1 = Ring {
                outer: a,
                inner: Some(c),
            };
            let k2 = Ring { outer: c, inner: b };
            let union = Ring { outer: a, inner: b };
            let (v1, v2, v) = (self.value(k1), self.value(k2), self.value(union));
            if v1 + v2 > v + SUPERADDITIVITY_TOL * v.max(1.0) {
                let show = |r: Ring| {
                    let s = tree.ring_spec(r);
                    match s.inner {
                        Some(i) => format!("{} \\ {}", s.outer, i),
                        None => s.outer.to_string(),
                    }
                };
                return Err(Error::Superadditivity {
                    first: show(k1),
                    second: show(k2),
                });
            }
        }
        self.superadditive = true;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitResult {
    /// Disjoint cover of Ω with `φ ≤ ε` on every member.
    #[serde(skip)]
    pub partition: Vec<Ring>,
    /// Disjoint members with `φ > ε`.
    #[serde(skip)]
    pub witnesses: Vec<Ring>,
    pub epsilon: f64,
    /// Set when `φ(Ω) ≤ ε` and the split is `({Ω}, ∅)`.
    pub trivial: bool,
}

/// The three postconditions of a split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SplitCheck {
    /// (a) the partition covers Ω disjointly with `φ ≤ ε` on every member.
    pub partition_ok: bool,
    /// (b) the witnesses are disjoint with `φ > ε`.
    pub witnesses_ok: bool,
    /// (c) `card 𝒫_ε ≤ 2ν card 𝒫̃_ε` (vacuous for the trivial split).
    pub card_ok: bool,
}

impl SplitCheck {
    pub fn all(&self) -> bool {
        self.partition_ok && self.witnesses_ok && self.card_ok
    }
}

impl SplitResult {
    pub fn verify(&self, tree: &FiltrationTree, phi: &SetFunction) -> SplitCheck {
        let eps = self.epsilon;
        SplitCheck {
            partition_ok: tree.is_partition(&self.partition) && self.partition.iter().all(|r| phi.value(*r) <= eps),
            witnesses_ok: tree.family_disjoint(&self.witnesses) && self.witnesses.iter().all(|r| phi.value(*r) > eps),
            card_ok: self.trivial || self.partition.len() <= 2 * tree.nu() * self.witnesses.len(),
        }
    }

    pub fn to_json(&self, tree: &FiltrationTree) -> String {
        let spec = |v: &[Ring]| v.iter().map(|r| tree.ring_spec(*r)).collect::<Vec<_>>();
        serde_json::json!({
            "epsilon": self.epsilon,
            "trivial": self.trivial,
            "partition": spec(&self.partition),
            "witnesses": spec(&self.witnesses),
            "partition_card": self.partition.len(),
            "witness_card": self.witnesses.len(),
        })
        .to_string()
    }
}

/// Splits Ω into pieces with `φ ≤ ε` and finds disjoint witnesses with
/// `φ > ε`, so that `card 𝒫_ε ≤ 2ν card 𝒫̃_ε`.
///
/// Heavy atoms (`φ > ε`) form a subtree. Terminal and branching heavy
/// atoms emit their light children. A run of atoms with exactly one heavy
/// child is peeled greedily into maximal light rings; when even one slab
/// is heavy it becomes a witness and its light children are emitted one by
/// one. Alternate extended rings of each run serve as witnesses.
pub fn cdpx_split(tree: &FiltrationTree, phi: &SetFunction, eps: f64) -> Result<SplitResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(param(format!("epsilon must be positive, got {eps}")));
    }
    let root = tree.root();
    if phi.value(Ring::atom(root)) <= eps {
        return Ok(SplitResult {
            partition: vec![Ring::atom(root)],
            witnesses: Vec::new(),
            epsilon: eps,
            trivial: true,
        });
    }
    let heavy = |a: AtomId| phi.value(Ring::atom(a)) > eps;
    let heavy_kids = |a: AtomId| -> Vec<AtomId> { tree.children(a).iter().copied().filter(|&c| heavy(c)).collect() };
    let mut partition = Vec::new();
    let mut witnesses = Vec::new();
    let mut stack = vec![root];
    while let Some(top) = stack.pop() {
        // follow the chain of single heavy children
        let mut chain = vec![top];
        let mut hk = heavy_kids(top);
        while hk.len() == 1 {
            chain.push(hk[0]);
            hk = heavy_kids(hk[0]);
        }
        let last = *chain.last().expect("nonempty chain");
        if tree.is_leaf(last) {
            return Err(Error::LeafAboveThreshold {
                eps,
                atom: tree.label(last),
            });
        }
        let r = chain.len() - 1;
        let ring = |i: usize, j: usize| Ring {
            outer: chain[i],
            inner: Some(chain[j]),
        };
        let mut a = 0;
        let mut run: Vec<usize> = vec![0];
        let close_run = |run: &mut Vec<usize>, witnesses: &mut Vec<Ring>| {
            // run = [a_0, a_1, …, a_k]; extensions exist for i < k
            let k = run.len() - 1;
            let mut i = 1;
            while i < k {
                witnesses.push(ring(run[i - 1], run[i] + 1));
                i += 2;
            }
        };
        while a < r {
            let mut b = a;
            for j in (a + 1..=r).rev() {
                if phi.value(ring(a, j)) <= eps {
                    b = j;
                    break;
                }
            }
            if b == a {
                // heavy slab
                close_run(&mut run, &mut witnesses);
                witnesses.push(ring(a, a + 1));
                for &c in tree.children(chain[a]) {
                    if c != chain[a + 1] {
                        partition.push(Ring::atom(c));
                    }
                }
                a += 1;
                run = vec![a];
            } else {
                partition.push(ring(a, b));
                run.push(b);
                a = b;
            }
        }
        close_run(&mut run, &mut witnesses);
        for &c in tree.children(last) {
            if !hk.contains(&c) {
                partition.push(Ring::atom(c));
            }
        }
        if hk.is_empty() {
            witnesses.push(Ring::atom(last));
        } else {
            stack.extend(hk.iter().rev());
        }
    }
    Ok(SplitResult {
        partition,
        witnesses,
        epsilon: eps,
        trivial: false,
    })
}

/// Output of the Jackson construction.
#[derive(Clone, Debug)]
pub struct JacksonResult {
    pub g: LeafFunction,
    pub split: SplitResult,
    /// `‖f − g‖_p`.
    pub error: f64,
    /// `(2ν)^{1/p} m^{−β} |f|_V`.
    pub bound: f64,
    pub seminorm: f64,
}

/// Piecewise best fit on the partition from `cdpx_split` with
/// `φ = E_p(f,·)^p` and `ε = |f|_V^p / m^{p/σ}`.
pub fn jackson_approximant(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    m: usize,
    params: VariationParams,
) -> Result<JacksonResult> {
    if m == 0 {
        return Err(param("m must be at least 1"));
    }
    let p = params.p;
    let v = var_seminorm(tree, space, f, params)?;
    let nu = tree.nu() as f64;
    let bound = (2.0 * nu).powf(1.0 / p) * (m as f64).powf(-params.beta) * v.seminorm;
    let split = if v.seminorm == 0.0 {
        SplitResult {
            partition: vec![Ring::atom(tree.root())],
            witnesses: Vec::new(),
            epsilon: 0.0,
            trivial: true,
        }
    } else {
        let eps = v.seminorm.powf(p) / (m as f64).powf(p / params.sigma);
        let phi = SetFunction::lp_error(tree, space, f, p)?;
        cdpx_split(tree, &phi, eps)?
    };
    let g = piecewise_fit(tree, space, f, p, &split.partition, None)?;
    let error = (f - &g).norm_p(tree, p);
    Ok(JacksonResult {
        g,
        split,
        error,
        bound,
        seminorm: v.seminorm,
    })
}

/// `Σ_K (best fit on K)·1_K`; members flagged `false` in `fitted` get 0.
pub fn piecewise_fit(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    p: f64,
    partition: &[Ring],
    fitted: Option<&[bool]>,
) -> Result<LeafFunction> {
    check_bound(tree, space, f)?;
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let mut ev = RingEvaluator::new(tree, &frame, &fd, p);
    let mut out = vec![0.0; fd.len()];
    let dim = frame.dim;
    for (i, r) in partition.iter().enumerate() {
        if fitted.is_some_and(|fl| !fl[i]) {
            continue;
        }
        let c = ev.best(*r)?.coeffs;
        for sp in tree.ring_spans(*r) {
            for pos in sp {
                out[pos] = (0..dim).map(|k| c[k] * frame.s[pos * dim + k]).sum();
            }
        }
    }
    Ok(LeafFunction::from_dfs(tree, &out))
}

/// Best piecewise approximant found for one term budget.
#[derive(Clone, Debug)]
pub struct PartitionApprox {
    pub budget: usize,
    /// `‖f − g‖_p`, an upper bound for `σ_budget(f, 𝒞)`.
    pub error: f64,
    pub partition: Vec<Ring>,
    /// Whether each member carries a fit (else `g = 0` there).
    pub fitted: Vec<bool>,
    pub g: LeafFunction,
    /// Number of distinct atoms used, i.e. dictionary terms of `g`.
    pub terms: usize,
}

#[derive(Clone, Copy, Debug)]
enum Pick {
    Atom(bool),
    Ring(AtomId, bool),
    Children,
}

/// Minimal `Σ_K err_K^p` over partitions into atoms (cost 1 when fitted)
/// and rings (cost 2 when fitted; a ring `A \ B` is `h·1_A − h·1_B`).
/// Unfitted members cost nothing and contribute `‖f‖_{L^p(K)}^p`.
pub fn partition_approximants(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    p: f64,
    budgets: &[usize],
) -> Result<Vec<PartitionApprox>> {
    check_bound(tree, space, f)?;
    check_p(p)?;
    let cap = budgets.iter().copied().max().unwrap_or(0);
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let table = RingTable::build(tree, &frame, &fd, p, false)?;
    let pw = |e: f64| if e == 0.0 { 0.0 } else { e.powf(p) };
    let n = tree.atom_count();
    let mut val: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut pick: Vec<Vec<Pick>> = vec![Vec::new(); n];
    for &a in tree.preorder().iter().rev() {
        let mut v = vec![pw(table.atom_norm[a]); cap + 1];
        let mut k = vec![Pick::Atom(false); cap + 1];
        let fit = pw(table.atom_err[a]);
        for c in 1..=cap {
            if fit < v[c] {
                v[c] = fit;
                k[c] = Pick::Atom(true);
            }
        }
        let kids = tree.children(a);
        if !kids.is_empty() {
            let mut acc = val[kids[0]].clone();
            for &ch in &kids[1..] {
                acc = min_plus(&acc, &val[ch]).0;
            }
            for c in 0..=cap {
                if acc[c] < v[c] {
                    v[c] = acc[c];
                    k[c] = Pick::Children;
                }
            }
            for (i, &b) in tree.descendants(a).iter().enumerate() {
                let zero = pw(table.ring_norm[a][i]);
                let fit = pw(table.ring_err[a][i]);
                for c in 0..=cap {
                    let x = zero + val[b][c];
                    if x < v[c] {
                        v[c] = x;
                        k[c] = Pick::Ring(b, false);
                    }
                    if c >= 2 {
                        let y = fit + val[b][c - 2];
                        if y < v[c] {
                            v[c] = y;
                            k[c] = Pick::Ring(b, true);
                        }
                    }
                }
            }
        }
        val[a] = v;
        pick[a] = k;
    }

    fn collect(
        tree: &FiltrationTree,
        val: &[Vec<f64>],
        pick: &[Vec<Pick>],
        a: AtomId,
        c: usize,
        out: &mut Vec<(Ring, bool)>,
    ) {
        match pick[a][c] {
            Pick::Atom(fit) => out.push((Ring::atom(a), fit)),
            Pick::Ring(b, fit) => {
                out.push((
                    Ring {
                        outer: a,
                        inner: Some(b),
                    },
                    fit,
                ));
                collect(tree, val, pick, b, if fit { c - 2 } else { c }, out);
            }
            Pick::Children => {
                let kids = tree.children(a);
                let mut prefix = vec![val[kids[0]].clone()];
                let mut args = vec![Vec::new()];
                for &ch in &kids[1..] {
                    let (v, arg) = min_plus(prefix.last().expect("nonempty"), &val[ch]);
                    prefix.push(v);
                    args.push(arg);
                }
                let mut rest = c;
                let mut parts = vec![0; kids.len()];
                for j in (1..kids.len()).rev() {
                    parts[j] = args[j][rest];
                    rest -= parts[j];
                }
                parts[0] = rest;
                for (j, &ch) in kids.iter().enumerate() {
                    collect(tree, val, pick, ch, parts[j], out);
                }
            }
        }
    }

    let mut out = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let mut members = Vec::new();
        collect(tree, &val, &pick, tree.root(), budget, &mut members);
        let (partition, fitted): (Vec<Ring>, Vec<bool>) = members.into_iter().unzip();
        let g = piecewise_fit(tree, space, f, p, &partition, Some(&fitted))?;
        let mut atoms: Vec<AtomId> = Vec::new();
        for (r, &fl) in partition.iter().zip(&fitted) {
            if fl {
                atoms.push(r.outer);
                atoms.extend(r.inner);
            }
        }
        atoms.sort_unstable();
        atoms.dedup();
        out.push(PartitionApprox {
            budget,
            error: (f - &g).norm_p(tree, p),
            partition,
            fitted,
            g,
            terms: atoms.len(),
        });
    }
    Ok(out)
}

/// Min-plus convolution of budget tables (parts may use budget 0).
fn min_plus(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let cap = a.len() - 1;
    let mut out = vec![f64::INFINITY; cap + 1];
    let mut arg = vec![0; cap + 1];
    for c in 0..=cap {
        for j in 0..=c {
            let x = a[c - j] + b[j];
            if x < out[c] {
                out[c] = x;
                arg[c] = j;
            }
        }
    }
    (out, arg)
}

/// Certified upper bound for `σ_n(f, 𝒞)`.
pub fn sigma_n_upper(tree: &FiltrationTree, space: &LocalSpace, f: &LeafFunction, n: usize, p: f64) -> Result<f64> {
    if n == 0 {
        return Err(param("n must be at least 1"));
    }
    Ok(partition_approximants(tree, space, f, p, &[n])?[0].error)
}

//! The ring-variation seminorm `|f|_{V_{σ,p}}`, its restricted form, the
//! near-best operators `W_μ`, the modulus `𝒲_S` and K-functional bounds.

mod kfun;
mod modulus;
mod table;

use serde::Serialize;

pub use kfun::{default_candidates, k_functional, k_upper, KCandidate, KFunctionalResult};
pub use modulus::{modulus_ws, ModulusCurve, ModulusResult};
pub(crate) use table::RingTable;

use crate::error::{param, Error, Result};
use crate::filtration::{AtomId, FiltrationTree, Ring};
use crate::local_basis::{LeafFunction, LocalSpace};
use crate::lp_approx::{
    check_bound, check_p, contraction, minimizer_constant, residual_norm, NearBestParams, NearBestRule, RingEvaluator,
};

/// Largest tree accepted by the exhaustive oracle.
pub const BRUTE_FORCE_MAX_LEAVES: usize = 12;

/// `0 < σ < p < ∞`, `β = 1/σ − 1/p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationParams {
    pub sigma: f64,
    pub p: f64,
    pub beta: f64,
}

impl VariationParams {
    pub fn new(sigma: f64, p: f64) -> Result<Self> {
        check_p(p)?;
        if !(sigma > 0.0 && sigma < p) {
            return Err(param(format!("need 0 < sigma < p, got sigma={sigma}, p={p}")));
        }
        Ok(VariationParams {
            sigma,
            p,
            beta: 1.0 / sigma - 1.0 / p,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariationResult {
    pub seminorm: f64,
    /// Disjoint family attaining the supremum.
    pub witness: Vec<Ring>,
    /// `‖f‖_p`.
    pub lp_norm: f64,
    /// `‖f‖_p + |f|_V`.
    pub full_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Choice {
    Empty,
    Atom,
    Children,
    Ring(AtomId),
}

/// Bottom-up maximisation of `Σ E^σ` over disjoint families.
fn run_dp(
    tree: &FiltrationTree,
    table: &RingTable,
    sigma: f64,
    allow_atom: impl Fn(AtomId) -> bool,
    allow_ring: impl Fn(AtomId, AtomId) -> bool,
) -> (Vec<f64>, Vec<Choice>) {
    let n = tree.atom_count();
    let mut best = vec![0.0; n];
    let mut choice = vec![Choice::Empty; n];
    let pw = |e: f64| if e == 0.0 { 0.0 } else { e.powf(sigma) };
    for &a in tree.preorder().iter().rev() {
        if !table.active[a] || table.zero[a] {
            continue;
        }
        let (mut v, mut c) = (0.0, Choice::Empty);
        if allow_atom(a) {
            let e = pw(table.atom_err[a]);
            if e > v {
                v = e;
                c = Choice::Atom;
            }
        }
        let kids: f64 = tree.children(a).iter().map(|&k| best[k]).sum();
        if kids > v {
            v = kids;
            c = Choice::Children;
        }
        for (i, &b) in tree.descendants(a).iter().enumerate() {
            let e = table.ring_err[a][i];
            if e.is_nan() || !allow_ring(a, b) {
                continue;
            }
            let cand = pw(e) + best[b];
            if cand > v {
                v = cand;
                c = Choice::Ring(b);
            }
        }
        best[a] = v;
        choice[a] = c;
    }
    (best, choice)
}

fn backtrack(tree: &FiltrationTree, choice: &[Choice]) -> Vec<Ring> {
    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(a) = stack.pop() {
        match choice[a] {
            Choice::Empty => {}
            Choice::Atom => out.push(Ring::atom(a)),
            Choice::Children => stack.extend(tree.children(a).iter().rev()),
            Choice::Ring(b) => {
                out.push(Ring {
                    outer: a,
                    inner: Some(b),
                });
                stack.push(b);
            }
        }
    }
    out
}

fn finish(tree: &FiltrationTree, f: &LeafFunction, params: VariationParams, best: f64, witness: Vec<Ring>) -> VariationResult {
    let seminorm = if best == 0.0 { 0.0 } else { best.powf(1.0 / params.sigma) };
    let lp_norm = f.norm_p(tree, params.p);
    VariationResult {
        seminorm,
        witness,
        lp_norm,
        full_norm: lp_norm + seminorm,
    }
}

/// `|f|_{V_{σ,p}}` by dynamic programming over atoms and rings.
///
/// An optimal family either contains `A` itself, or decomposes over the
/// children of `A`, or contains exactly one member `A \ B` meeting several
/// children, the rest lying inside `B`. Atoms on which `f ∈ S` contribute
/// nothing, and a ring whose hole lies inside such an atom is dominated by
/// the outer atom, so those are skipped.
pub fn var_seminorm(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    params: VariationParams,
) -> Result<VariationResult> {
    check_bound(tree, space, f)?;
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let table = RingTable::build(tree, &frame, &fd, params.p, true)?;
    let (best, choice) = run_dp(tree, &table, params.sigma, |_| true, |_, _| true);
    Ok(finish(tree, f, params, best[tree.root()], backtrack(tree, &choice)))
}

/// Exhaustive search over all disjoint families of atoms and rings.
pub fn var_seminorm_bruteforce(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    params: VariationParams,
) -> Result<VariationResult> {
    check_bound(tree, space, f)?;
    let l = tree.leaf_count();
    if l > BRUTE_FORCE_MAX_LEAVES {
        return Err(Error::Capacity {
            what: "brute-force leaves",
            requested: l,
            limit: BRUTE_FORCE_MAX_LEAVES,
        });
    }
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let mut ev = RingEvaluator::new(tree, &frame, &fd, params.p);
    // distinct leaf sets, grouped by their lowest position
    let mut by_low: Vec<Vec<(u32, f64, Ring)>> = vec![Vec::new(); l];
    let mut seen = std::collections::HashSet::new();
    for r in tree.enumerate_rings() {
        let mut mask = 0u32;
        for s in tree.ring_spans(r) {
            for pos in s {
                mask |= 1 << pos;
            }
        }
        if !seen.insert(mask) {
            continue;
        }
        let e = ev.error(r)?;
        let v = if e == 0.0 { 0.0 } else { e.powf(params.sigma) };
        by_low[mask.trailing_zeros() as usize].push((mask, v, r));
    }

    struct Search<'a> {
        by_low: &'a [Vec<(u32, f64, Ring)>],
        l: usize,
        best: f64,
        best_family: Vec<Ring>,
        cur: Vec<Ring>,
    }
    impl Search<'_> {
        fn go(&mut self, pos: usize, covered: u32, acc: f64) {
            let mut pos = pos;
            while pos < self.l && covered & (1 << pos) != 0 {
                pos += 1;
            }
            if pos == self.l {
                if acc > self.best {
                    self.best = acc;
                    self.best_family = self.cur.clone();
                }
                return;
            }
            // leave `pos` uncovered
            self.go(pos + 1, covered, acc);
            for i in 0..self.by_low[pos].len() {
                let (mask, v, r) = self.by_low[pos][i];
                if mask & covered == 0 {
                    self.cur.push(r);
                    self.go(pos + 1, covered | mask, acc + v);
                    self.cur.pop();
                }
            }
        }
    }
    let mut s = Search {
        by_low: &by_low,
        l,
        best: 0.0,
        best_family: Vec::new(),
        cur: Vec::new(),
    };
    s.go(0, 0, 0.0);
    let fam = s.best_family;
    Ok(finish(tree, f, params, s.best, fam))
}

/// Atoms of the σ-algebra generated by a partition: each atom member is
/// itself; a ring `A \ B` splits into the atoms present when `B` was born.
pub fn partition_atoms(tree: &FiltrationTree, partition: &[Ring]) -> Vec<AtomId> {
    let mut out = Vec::new();
    for r in partition {
        match r.inner {
            None => out.push(r.outer),
            Some(b) => {
                for x in tree.atoms_at_level(tree.born(b)) {
                    if tree.contains_atom(r.outer, x) && !tree.contains_atom(b, x) {
                        out.push(x);
                    }
                }
            }
        }
    }
    out
}

/// Supremum over families of members of `Π_𝒰`: atoms strictly containing an
/// atom of `ℱ_𝒰`, and rings `A \ B` with `A` strictly containing and `B`
/// containing such atoms. `f` must be piecewise in `S` on `𝒰`.
pub fn var_restricted(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    params: VariationParams,
    partition: &[Ring],
) -> Result<VariationResult> {
    check_bound(tree, space, f)?;
    if !tree.is_partition(partition) {
        return Err(param("the family is not a partition of the leaf set"));
    }
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let mut ev = RingEvaluator::new(tree, &frame, &fd, params.p);
    for r in partition {
        if ev.error(*r)? != 0.0 {
            let s = tree.ring_spec(*r);
            return Err(Error::Form(format!(
                "f is not in S on partition member {}{}",
                s.outer,
                s.inner.map(|b| format!(" \\ {b}")).unwrap_or_default()
            )));
        }
    }
    let n = tree.atom_count();
    let mut sup = vec![false; n];
    let mut strict_sup = vec![false; n];
    for t in partition_atoms(tree, partition) {
        sup[t] = true;
        let mut x = tree.parent(t);
        while let Some(y) = x {
            sup[y] = true;
            strict_sup[y] = true;
            x = tree.parent(y);
        }
    }
    let table = RingTable::build(tree, &frame, &fd, params.p, true)?;
    let (best, choice) = run_dp(
        tree,
        &table,
        params.sigma,
        |a| strict_sup[a],
        |a, b| strict_sup[a] && sup[b],
    );
    Ok(finish(tree, f, params, best[tree.root()], backtrack(tree, &choice)))
}

/// Output of `W_μ`.
#[derive(Clone, Debug)]
pub struct WmuResult {
    pub function: LeafFunction,
    /// The near-best constant the construction is certified for.
    pub certified_m: f64,
    /// `(Σ_{A∈𝒜_μ} E_p(f,A)^p)^{1/p}`.
    pub local_error: f64,
}

/// `W_μ f = Σ_{A∈𝒜_μ} f_A 1_A` with near-best `f_A`.
pub fn w_mu(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    mu: usize,
    p: f64,
    m: f64,
    rule: NearBestRule,
) -> Result<WmuResult> {
    check_bound(tree, space, f)?;
    let params = NearBestParams::new(m, p)?;
    if mu > tree.split_count() {
        return Err(param(format!("level {mu} exceeds split count {}", tree.split_count())));
    }
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let mut ev = RingEvaluator::new(tree, &frame, &fd, p);
    let mut ev2 = RingEvaluator::new(tree, &frame, &fd, 2.0);
    let mut out = vec![0.0; fd.len()];
    let mut certified: f64 = 1.0;
    let mut local = 0.0;
    let dim = frame.dim;
    for a in tree.atoms_at_level(mu) {
        let r = Ring::atom(a);
        let best = ev.best(r)?;
        local += best.error.powf(p);
        let coeffs = match rule {
            NearBestRule::Minimizer => {
                certified = certified.max(minimizer_constant(p, params.rho));
                best.coeffs.clone()
            }
            NearBestRule::Orthoprojector => {
                let c = ev2.best(r)?.coeffs;
                if !contraction(space, p) {
                    let err = residual_norm(&frame, &fd, &tree.ring_spans(r), &c, p);
                    let l = if best.is_zero() { 1.0 } else { (err / best.error).max(1.0) };
                    let rho = params.rho;
                    certified = certified.max((l.powf(rho) + 1.0).powf(1.0 / rho));
                }
                c
            }
        };
        for pos in tree.span(a) {
            out[pos] = (0..dim).map(|k| coeffs[k] * frame.s[pos * dim + k]).sum();
        }
    }
    if m < certified * (1.0 - 1e-12) {
        return Err(Error::NearBest {
            requested: m,
            certified,
        });
    }
    Ok(WmuResult {
        function: LeafFunction::from_dfs(tree, &out),
        certified_m: certified,
        local_error: local.powf(1.0 / p),
    })
}

/// Witness family in external form.
pub fn witness_json(tree: &FiltrationTree, witness: &[Ring]) -> String {
    tree.family_to_json(witness)
}

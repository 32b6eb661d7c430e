use super::{RingTable, VariationParams};
use crate::error::{param, Result};
use crate::filtration::{AtomId, FiltrationTree, Ring};
use crate::local_basis::{LeafFunction, LocalSpace};
use crate::lp_approx::check_bound;

#[derive(Clone, Debug, PartialEq)]
pub struct ModulusResult {
    /// `𝒲_S(f, t)_{σ,p}`.
    pub value: f64,
    pub t: f64,
    /// Cardinality of the maximizing partition.
    pub k: usize,
    pub partition: Vec<Ring>,
    /// `cover(Ω, k)^{1/σ}` for `k = 1, 2, …` (index `k − 1`).
    pub cover: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
enum Step {
    None,
    Atom,
    Ring(AtomId),
    Children,
}

/// Best `Σ E_p^σ` over partitions of each atom into exactly `k` members.
pub(crate) struct CoverTables {
    pub cover: Vec<Vec<f64>>,
    step: Vec<Vec<Step>>,
}

fn pw(e: f64, sigma: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e.powf(sigma)
    }
}

/// Max-plus convolution where every part takes at least one member.
fn convolve(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut out = vec![f64::NEG_INFINITY; a.len() + b.len() - 1];
    let mut arg = vec![0usize; out.len()];
    for (i, &x) in a.iter().enumerate().skip(1) {
        if x == f64::NEG_INFINITY {
            continue;
        }
        for (j, &y) in b.iter().enumerate().skip(1) {
            if y == f64::NEG_INFINITY {
                continue;
            }
            if x + y > out[i + j] {
                out[i + j] = x + y;
                arg[i + j] = j;
            }
        }
    }
    (out, arg)
}

impl CoverTables {
    pub fn build(tree: &FiltrationTree, table: &RingTable, sigma: f64) -> Self {
        let n = tree.atom_count();
        let mut cover: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut step: Vec<Vec<Step>> = vec![Vec::new(); n];
        for &a in tree.preorder().iter().rev() {
            let size = tree.atom_size(a);
            let mut c = vec![f64::NEG_INFINITY; size + 1];
            let mut s = vec![Step::None; size + 1];
            c[1] = pw(table.atom_err[a], sigma);
            s[1] = Step::Atom;
            let kids = tree.children(a);
            if !kids.is_empty() {
                let mut acc = cover[kids[0]].clone();
                for &k in &kids[1..] {
                    acc = convolve(&acc, &cover[k]).0;
                }
                for (k, &v) in acc.iter().enumerate() {
                    if v > c[k] {
                        c[k] = v;
                        s[k] = Step::Children;
                    }
                }
                for (i, &b) in tree.descendants(a).iter().enumerate() {
                    let e = pw(table.ring_err[a][i], sigma);
                    for (k1, &v) in cover[b].iter().enumerate().skip(1) {
                        if v + e > c[k1 + 1] {
                            c[k1 + 1] = v + e;
                            s[k1 + 1] = Step::Ring(b);
                        }
                    }
                }
            }
            cover[a] = c;
            step[a] = s;
        }
        CoverTables { cover, step }
    }

    /// The partition of `a` into `k` members realising `cover[a][k]`.
    pub fn partition(&self, tree: &FiltrationTree, a: AtomId, k: usize, out: &mut Vec<Ring>) {
        match self.step[a][k] {
            Step::None => {}
            Step::Atom => out.push(Ring::atom(a)),
            Step::Ring(b) => {
                out.push(Ring {
                    outer: a,
                    inner: Some(b),
                });
                self.partition(tree, b, k - 1, out);
            }
            Step::Children => {
                let kids = tree.children(a);
                let mut prefix = vec![self.cover[kids[0]].clone()];
                let mut args = vec![Vec::new()];
                for &c in &kids[1..] {
                    let (v, arg) = convolve(prefix.last().expect("nonempty"), &self.cover[c]);
                    prefix.push(v);
                    args.push(arg);
                }
                let mut rest = k;
                let mut parts = vec![0usize; kids.len()];
                for j in (1..kids.len()).rev() {
                    parts[j] = args[j][rest];
                    rest -= parts[j];
                }
                parts[0] = rest;
                for (j, &c) in kids.iter().enumerate() {
                    self.partition(tree, c, parts[j], out);
                }
            }
        }
    }
}

/// `cover(Ω, k)^{1/σ}` for every feasible `k`, computed once and evaluated
/// at any `t`.
#[derive(Clone, Debug)]
pub struct ModulusCurve {
    pub params: VariationParams,
    pub cover: Vec<f64>,
}

impl ModulusCurve {
    pub fn new(tree: &FiltrationTree, space: &LocalSpace, f: &LeafFunction, params: VariationParams) -> Result<Self> {
        Ok(Self::with_tables(tree, space, f, params)?.0)
    }

    fn with_tables(
        tree: &FiltrationTree,
        space: &LocalSpace,
        f: &LeafFunction,
        params: VariationParams,
    ) -> Result<(Self, CoverTables)> {
        check_bound(tree, space, f)?;
        let frame = space.frame(tree);
        let fd = f.dfs_values(tree);
        let table = RingTable::build(tree, &frame, &fd, params.p, false)?;
        let tables = CoverTables::build(tree, &table, params.sigma);
        let cover = tables.cover[tree.root()][1..]
            .iter()
            .map(|&v| if v <= 0.0 { 0.0 } else { v.powf(1.0 / params.sigma) })
            .collect();
        Ok((ModulusCurve { params, cover }, tables))
    }

    /// `(max_k min(t, 1/k)^β cover(Ω,k)^{1/σ}, argmax k)`.
    pub fn eval(&self, t: f64) -> (f64, usize) {
        let mut best = (0.0, 1);
        for (i, &c) in self.cover.iter().enumerate() {
            let k = (i + 1) as f64;
            let v = t.min(1.0 / k).powf(self.params.beta) * c;
            if v > best.0 {
                best = (v, i + 1);
            }
        }
        best
    }
}

/// `𝒲_S(f, t)_{σ,p}`: supremum over partitions `Π` of Ω into atoms and
/// rings of `min(t, 1/card Π)^β (Σ E_p(f,R)^σ)^{1/σ}`.
pub fn modulus_ws(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    t: f64,
    params: VariationParams,
) -> Result<ModulusResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(param(format!("t must be positive, got {t}")));
    }
    let (curve, tables) = ModulusCurve::with_tables(tree, space, f, params)?;
    let (value, k) = curve.eval(t);
    let mut partition = Vec::new();
    tables.partition(tree, tree.root(), k, &mut partition);
    Ok(ModulusResult {
        value,
        t,
        k,
        partition,
        cover: curve.cover,
    })
}

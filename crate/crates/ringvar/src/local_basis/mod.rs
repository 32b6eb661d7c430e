//! Local spaces `S`, orthoprojectors onto piecewise-`S` functions, the
//! stability check and the local orthonormal system.

mod function;
mod system;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use function::LeafFunction;
pub use system::{Element, LocalSystem, PNormalized};

use crate::error::{param, Error, Result};
use crate::filtration::{AtomId, FiltrationTree};
use crate::linalg::{svd, Mat};

/// Relative cutoff for singular values in rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// A finite-dimensional space of leaf functions.
#[derive(Clone, Debug)]
pub struct LocalSpace {
    basis: Vec<LeafFunction>,
    constant: bool,
}

impl LocalSpace {
    /// `S = span{1_Ω}`.
    pub fn constants(tree: &FiltrationTree) -> Self {
        LocalSpace {
            basis: vec![LeafFunction::constant(tree.leaf_count(), 1.0)],
            constant: true,
        }
    }

    /// Polynomials of the given degree in the leaf midpoint coordinate,
    /// centred at 1/2.
    pub fn polynomials(tree: &FiltrationTree, degree: usize) -> Self {
        let x = tree.leaf_midpoints();
        let basis = (0..=degree)
            .map(|k| LeafFunction::new(x.iter().map(|&t| (t - 0.5).powi(k as i32)).collect()))
            .collect();
        LocalSpace {
            basis,
            constant: degree == 0,
        }
    }

    pub fn from_basis(tree: &FiltrationTree, basis: Vec<LeafFunction>) -> Result<Self> {
        if basis.is_empty() {
            return Err(param("local space needs at least one basis function"));
        }
        if basis.iter().any(|b| !b.is_bound_to(tree)) {
            return Err(param("basis function length differs from the leaf count"));
        }
        let constant = basis.len() == 1 && {
            let v = basis[0].values();
            v[0] != 0.0 && v.iter().all(|&x| x == v[0])
        };
        Ok(LocalSpace { basis, constant })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[LeafFunction] {
        &self.basis
    }

    /// Whether `S` is spanned by one nonzero constant.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn is_bound_to(&self, tree: &FiltrationTree) -> bool {
        self.basis.iter().all(|b| b.is_bound_to(tree))
    }

    /// `Σ c_k s_k`.
    pub fn combine(&self, coeffs: &[f64]) -> LeafFunction {
        let mut f = LeafFunction::zeros(self.basis[0].len());
        for (c, b) in coeffs.iter().zip(&self.basis) {
            f.axpy(*c, b);
        }
        f
    }

    /// Weights and basis values in depth-first leaf order.
    pub fn frame(&self, tree: &FiltrationTree) -> Frame {
        let dim = self.dim();
        let order = tree.dfs_leaves();
        let w = order.iter().map(|&li| tree.leaf_weights()[li]).collect();
        let mut s = Vec::with_capacity(order.len() * dim);
        for &li in order {
            for b in &self.basis {
                s.push(b.values()[li]);
            }
        }
        Frame {
            w,
            s,
            dim,
            constant: self.constant,
        }
    }
}

/// Depth-first layout of weights and basis values: `s[pos·dim + k]`.
#[derive(Clone, Debug)]
pub struct Frame {
    pub w: Vec<f64>,
    pub s: Vec<f64>,
    pub dim: usize,
    pub constant: bool,
}

impl Frame {
    fn positions<'a>(ranges: &'a [Range<usize>]) -> impl Iterator<Item = usize> + 'a {
        ranges.iter().flat_map(|r| r.clone())
    }

    /// Orthonormal basis of `S` restricted to the positions, as vectors in
    /// `√w`-scaled coordinates over the concatenated ranges.
    pub fn orthonormal_on(&self, ranges: &[Range<usize>]) -> Vec<Vec<f64>> {
        let n: usize = ranges.iter().map(|r| r.len()).sum();
        if self.constant {
            let total: f64 = Self::positions(ranges).map(|p| self.w[p]).sum();
            let inv = 1.0 / total.sqrt();
            return vec![Self::positions(ranges).map(|p| self.w[p].sqrt() * inv).collect()];
        }
        let dim = self.dim;
        let pos: Vec<usize> = Self::positions(ranges).collect();
        let m = Mat::from_fn(n, dim, |i, k| self.w[pos[i]].sqrt() * self.s[pos[i] * dim + k]);
        left_singular_basis(m, 0.0)
    }
}

/// Left singular vectors with singular value above `RANK_TOL·max(σ_max, floor_scale)`,
/// ordered by decreasing singular value.
pub(crate) fn left_singular_basis(m: Mat, floor_scale: f64) -> Vec<Vec<f64>> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    if m.data.iter().all(|&x| x == 0.0) {
        return Vec::new();
    }
    let d = svd(&m);
    let smax = d.sigma.first().copied().unwrap_or(0.0);
    let tol = RANK_TOL * smax.max(floor_scale);
    d.sigma
        .iter()
        .zip(d.u)
        .filter(|(s, _)| **s > tol && **s > 0.0)
        .map(|(_, u)| u)
        .collect()
}

/// Makes the first entry of significant size positive.
pub(crate) fn fix_sign(v: &mut [f64], scan: &[usize]) {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for &i in scan {
        if v[i].abs() > 1e-9 * m {
            if v[i] < 0.0 {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
            return;
        }
    }
}

/// `P_n f`: atomwise weighted least-squares projection onto `S` on the
/// atoms present after `n` splits. `n = -1` gives zero.
pub fn project_level(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    n: isize,
) -> Result<LeafFunction> {
    if n < 0 {
        if n == -1 {
            return Ok(LeafFunction::zeros(tree.leaf_count()));
        }
        return Err(param(format!("level {n} below -1")));
    }
    let n = n as usize;
    if n > tree.split_count() {
        return Err(param(format!("level {n} exceeds split count {}", tree.split_count())));
    }
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    let mut out = vec![0.0; fd.len()];
    for a in tree.atoms_at_level(n) {
        project_atom(tree, &frame, &fd, a, &mut out)?;
    }
    Ok(LeafFunction::from_dfs(tree, &out))
}

/// Writes the projection of `fd` onto `S_A` into `out` on the span of `a`.
pub(crate) fn project_atom(
    tree: &FiltrationTree,
    frame: &Frame,
    fd: &[f64],
    a: AtomId,
    out: &mut [f64],
) -> Result<()> {
    let span = tree.span(a);
    if frame.constant {
        let (mut sw, mut swf) = (0.0, 0.0);
        for p in span.clone() {
            sw += frame.w[p];
            swf += frame.w[p] * fd[p];
        }
        let m = swf / sw;
        for p in span {
            out[p] = m;
        }
        return Ok(());
    }
    let q = frame.orthonormal_on(std::slice::from_ref(&span));
    if q.is_empty() {
        return Err(Error::Degenerate {
            atom: tree.label(a),
        });
    }
    let sq: Vec<f64> = span.clone().map(|p| frame.w[p].sqrt()).collect();
    for p in span.clone() {
        out[p] = 0.0;
    }
    for u in &q {
        let c: f64 = span
            .clone()
            .enumerate()
            .map(|(i, p)| u[i] * sq[i] * fd[p])
            .sum();
        for (i, p) in span.clone().enumerate() {
            out[p] += c * u[i] / sq[i];
        }
    }
    Ok(())
}

/// Result of the stability check `|{|f| ≥ c1‖f‖_A} ∩ A| ≥ c2|A|`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub c1: f64,
    pub c2: f64,
    pub worst_atom: AtomId,
    pub samples: usize,
    pub sampled: bool,
}

/// Level-set profile of one function on one atom: sorted ratios
/// `|f|/‖f‖_A` (descending) with cumulative mass fractions.
struct Profile {
    ratios: Vec<f64>,
    mass: Vec<f64>,
}

impl Profile {
    fn new(vals: &[f64], w: &[f64]) -> Option<Profile> {
        let m = vals.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if m == 0.0 {
            return None;
        }
        let total: f64 = w.iter().sum();
        let mut pairs: Vec<(f64, f64)> = vals.iter().zip(w).map(|(v, w)| (v.abs() / m, *w)).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut ratios = Vec::with_capacity(pairs.len());
        let mut mass = Vec::with_capacity(pairs.len());
        let mut acc = 0.0;
        for (r, wt) in pairs {
            acc += wt;
            ratios.push(r);
            mass.push(acc / total);
        }
        Some(Profile { ratios, mass })
    }

    /// Mass fraction of `{ratio ≥ c1}`.
    fn at(&self, c1: f64) -> f64 {
        let k = self.ratios.partition_point(|&r| r >= c1);
        if k == 0 {
            0.0
        } else {
            self.mass[k - 1]
        }
    }
}

/// Best `(c1, c2)` on one atom for `dim S = 1`, maximizing `c1·c2`
/// (ties to the larger `c1`).
pub fn atom_stability(
    tree: &FiltrationTree,
    space: &LocalSpace,
    a: AtomId,
) -> Result<(f64, f64)> {
    if space.dim() != 1 {
        return Err(Error::Unsupported("exact per-atom stability needs dim S = 1".into()));
    }
    let (vals, w) = restrict(tree, &space.basis()[0], a);
    let prof = Profile::new(&vals, &w).ok_or(Error::Degenerate { atom: tree.label(a) })?;
    Ok(best_pair(&prof.ratios, |c| prof.at(c)))
}

fn restrict(tree: &FiltrationTree, f: &LeafFunction, a: AtomId) -> (Vec<f64>, Vec<f64>) {
    let leaves = &tree.dfs_leaves()[tree.span(a)];
    (
        leaves.iter().map(|&li| f.values()[li]).collect(),
        leaves.iter().map(|&li| tree.leaf_weights()[li]).collect(),
    )
}

fn best_pair(candidates: &[f64], g: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (0.0, 0.0);
    let mut best_prod = -1.0;
    for &c in candidates {
        if c <= 0.0 {
            continue;
        }
        let m = g(c);
        let prod = c * m;
        if prod > best_prod + 1e-15 || ((prod - best_prod).abs() <= 1e-15 && c > best.0) {
            best_prod = prod;
            best = (c, m);
        }
    }
    best
}

/// Global stability constants over all atoms. For `dim S = 1` uses the
/// exact level sets; otherwise `samples` random unit directions of `S`.
pub fn check_stability(
    tree: &FiltrationTree,
    space: &LocalSpace,
    samples: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if !space.is_bound_to(tree) {
        return Err(param("local space is not bound to the tree"));
    }
    let dim = space.dim();
    let directions: Vec<Vec<f64>> = if dim == 1 {
        vec![vec![1.0]]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples.max(1))
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                v.iter().map(|x| x / n).collect()
            })
            .collect()
    };
    let funcs: Vec<LeafFunction> = directions.iter().map(|c| space.combine(c)).collect();
    let mut profiles: Vec<(AtomId, Profile)> = Vec::new();
    for a in 0..tree.atom_count() {
        let mut any = false;
        for f in &funcs {
            let (vals, w) = restrict(tree, f, a);
            if let Some(pf) = Profile::new(&vals, &w) {
                profiles.push((a, pf));
                any = true;
            }
        }
        if !any {
            return Err(Error::Degenerate {
                atom: tree.label(a),
            });
        }
    }
    let mut cands: Vec<f64> = profiles.iter().flat_map(|(_, p)| p.ratios.iter().copied()).collect();
    cands.retain(|&c| c > 0.0);
    cands.sort_by(|a, b| b.total_cmp(a));
    cands.dedup();
    if cands.len() > 512 {
        let step = cands.len() as f64 / 512.0;
        let mut thin: Vec<f64> = (0..512).map(|i| cands[(i as f64 * step) as usize]).collect();
        thin.push(1.0);
        thin.sort_by(|a, b| b.total_cmp(a));
        thin.dedup();
        cands = thin;
    }
    let global = |c: f64| {
        profiles
            .iter()
            .map(|(_, p)| p.at(c))
            .fold(f64::INFINITY, f64::min)
    };
    let (c1, c2) = best_pair(&cands, global);
    let worst_atom = profiles
        .iter()
        .min_by(|x, y| x.1.at(c1).total_cmp(&y.1.at(c1)))
        .map(|x| x.0)
        .unwrap_or(0);
    Ok(StabilityReport {
        c1,
        c2,
        worst_atom,
        samples: funcs.len(),
        sampled: dim > 1,
    })
}

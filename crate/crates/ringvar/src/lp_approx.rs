//! Best local `L^p` approximation `E_p(f, R) = inf_{g∈S} ‖f − g‖_{L^p(R)}`.

use crate::error::{param, Error, Result};
use crate::filtration::{AtomId, FiltrationTree, Ring};
use crate::linalg::{lstsq, Mat};
use crate::local_basis::{Frame, LeafFunction, LocalSpace};

/// Values of `E_p` at or below this fraction of `‖f‖_{L^p(R)}` count as zero.
pub const ZERO_FLOOR: f64 = 1e-10;

const MAX_ITER: usize = 500;
const GRAD_TOL: f64 = 1e-10;
const IRLS_WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    ConvexIterative,
    CandidateEnumeration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestApprox {
    /// `E_p(f, R)`.
    pub error: f64,
    /// Minimizer as coefficients over the basis of `S`.
    pub coeffs: Vec<f64>,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    /// `‖f‖_{L^p(R)}`.
    pub norm: f64,
}

impl BestApprox {
    /// Whether the error is zero up to the relative floor.
    pub fn is_zero(&self) -> bool {
        is_negligible(self.error, self.norm)
    }
}

pub fn is_negligible(err: f64, norm: f64) -> bool {
    err <= ZERO_FLOOR * norm
}

/// `M`, `ρ = min(1, p)` and `L = (M^ρ + 1)^{1/ρ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearBestParams {
    pub m: f64,
    pub rho: f64,
    pub l: f64,
}

impl NearBestParams {
    pub fn new(m: f64, p: f64) -> Result<Self> {
        if !(m >= 1.0 && m.is_finite()) {
            return Err(param(format!("near-best constant must be >= 1, got {m}")));
        }
        check_p(p)?;
        let rho = p.min(1.0);
        Ok(NearBestParams {
            m,
            rho,
            l: (m.powf(rho) + 1.0).powf(1.0 / rho),
        })
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(param(format!("p must lie in (0, ∞), got {p}")))
    }
}

/// `Σ w |r|^p`.
fn lp_sum(w: &[f64], r: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p == 2.0 {
        w.iter().zip(r).map(|(w, r)| w * r * r).sum()
    } else if p == 1.0 {
        w.iter().zip(r).map(|(w, r)| w * r.abs()).sum()
    } else {
        w.iter().zip(r).map(|(w, r)| w * r.abs().powf(p)).sum()
    }
}

/// Solves the local problem on gathered data. `s` is row-major `n × dim`.
pub fn solve(w: &[f64], f: &[f64], s: &[f64], dim: usize, p: f64) -> Result<BestApprox> {
    check_p(p)?;
    let n = w.len();
    if n == 0 {
        return Err(Error::InvalidParam("empty ring".into()));
    }
    let norm = lp_sum(w, f.iter().copied(), p).powf(1.0 / p);
    let mut out = if dim == 1 {
        solve_1d(w, f, s, p)
    } else if p == 2.0 {
        let c = weighted_ls(w, f, s, dim, None);
        BestApprox {
            error: 0.0,
            coeffs: c,
            method: Method::Exact,
            iterations: 0,
            converged: true,
            norm,
        }
    } else if p >= 1.0 {
        irls(w, f, s, dim, p)
    } else {
        return Err(Error::Unsupported(format!(
            "p = {p} < 1 requires dim S = 1, got {dim}"
        )));
    };
    let resid = (0..n).map(|i| f[i] - (0..dim).map(|k| out.coeffs[k] * s[i * dim + k]).sum::<f64>());
    out.error = lp_sum(w, resid, p).powf(1.0 / p);
    out.norm = norm;
    Ok(out)
}

fn result(c: Vec<f64>, method: Method, iterations: usize, converged: bool) -> BestApprox {
    BestApprox {
        error: 0.0,
        coeffs: c,
        method,
        iterations,
        converged,
        norm: 0.0,
    }
}

fn solve_1d(w: &[f64], f: &[f64], s: &[f64], p: f64) -> BestApprox {
    // reduce to min_c Σ v |r − c|^p over leaves with s ≠ 0
    let mut r = Vec::with_capacity(w.len());
    let mut v = Vec::with_capacity(w.len());
    let mut v1 = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        if s[i] != 0.0 {
            r.push(f[i] / s[i]);
            v.push(w[i] * s[i].abs().powf(p));
            v1.push(w[i] * s[i].abs());
        }
    }
    if r.is_empty() {
        return result(vec![0.0], Method::Exact, 0, true);
    }
    let (lo, hi) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if lo == hi {
        return result(vec![lo], Method::Exact, 0, true);
    }
    if p == 2.0 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..w.len() {
            num += w[i] * s[i] * f[i];
            den += w[i] * s[i] * s[i];
        }
        return result(vec![num / den], Method::Exact, 0, true);
    }
    if p == 1.0 {
        return result(vec![weighted_median(&r, &v1)], Method::Exact, 0, true);
    }
    if p < 1.0 {
        let mut cand = r.clone();
        cand.sort_by(f64::total_cmp);
        cand.dedup();
        let mut best = (f64::INFINITY, cand[0]);
        for &c in &cand {
            let val = lp_sum(&v, r.iter().map(|x| x - c), p);
            if val < best.0 * (1.0 - 1e-13) {
                best = (val, c);
            }
        }
        return result(vec![best.1], Method::CandidateEnumeration, cand.len(), true);
    }
    newton_1d(&r, &v, p, lo, hi)
}

/// Smallest candidate at which the cumulative weight reaches half the total.
pub fn weighted_median(r: &[f64], v: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| r[a].total_cmp(&r[b]));
    let total: f64 = v.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += v[i];
        if 2.0 * acc >= total * (1.0 - 1e-14) {
            return r[i];
        }
    }
    r[*idx.last().expect("nonempty")]
}

/// Safeguarded Newton on the derivative of `Σ v|r − c|^p`, `p > 1`.
fn newton_1d(r: &[f64], v: &[f64], p: f64, lo0: f64, hi0: f64) -> BestApprox {
    let (mut lo, mut hi) = (lo0, hi0);
    let vs: f64 = v.iter().sum();
    let mut c = r.iter().zip(v).map(|(r, v)| r * v).sum::<f64>() / vs;
    let scale = (hi0 - lo0).abs().max(lo0.abs().max(hi0.abs()));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let (mut g, mut h, mut gs) = (0.0, 0.0, 0.0);
        for (ri, vi) in r.iter().zip(v) {
            let d = ri - c;
            let a = d.abs();
            let t = vi * a.powf(p - 1.0);
            g -= t * d.signum() * if a == 0.0 { 0.0 } else { 1.0 };
            gs += t;
            h += if a == 0.0 {
                if p < 2.0 {
                    f64::INFINITY
                } else if p == 2.0 {
                    *vi
                } else {
                    0.0
                }
            } else {
                vi * a.powf(p - 2.0)
            };
        }
        g *= p;
        h *= p * (p - 1.0);
        if g.abs() <= GRAD_TOL * p * gs.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * scale {
            converged = true;
            break;
        }
        if g > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let step = c - g / h;
        c = if step.is_finite() && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    result(vec![c], Method::ConvexIterative, iterations, converged)
}

/// Weighted least squares `min Σ ω (f − s·c)^2`; `omega` defaults to `w`.
fn weighted_ls(w: &[f64], f: &[f64], s: &[f64], dim: usize, omega: Option<&[f64]>) -> Vec<f64> {
    let n = w.len();
    let om = omega.unwrap_or(w);
    let a = Mat::from_fn(n, dim, |i, k| om[i].sqrt() * s[i * dim + k]);
    let b: Vec<f64> = (0..n).map(|i| om[i].sqrt() * f[i]).collect();
    lstsq(&a, &b, crate::local_basis::RANK_TOL)
}

fn irls(w: &[f64], f: &[f64], s: &[f64], dim: usize, p: f64) -> BestApprox {
    let n = w.len();
    let resid = |c: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| f[i] - (0..dim).map(|k| c[k] * s[i * dim + k]).sum::<f64>())
            .collect()
    };
    let obj = |res: &[f64]| lp_sum(w, res.iter().copied(), p);
    let fscale = f.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut c = weighted_ls(w, f, s, dim, None);
    let mut res = resid(&c);
    let mut val = obj(&res);
    let mut iterations = 0;
    let mut converged = false;
    let mut omega = vec![0.0; n];
    while iterations < MAX_ITER {
        iterations += 1;
        // gradient of Σ w|res|^p
        let mut grad = vec![0.0; dim];
        let mut gscale = 0.0;
        for i in 0..n {
            let a = res[i].abs();
            if a > 0.0 {
                let t = p * w[i] * a.powf(p - 1.0);
                gscale += t * (0..dim).map(|k| s[i * dim + k].abs()).sum::<f64>();
                for k in 0..dim {
                    grad[k] -= t * res[i].signum() * s[i * dim + k];
                }
            }
        }
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn <= GRAD_TOL * gscale.max(f64::MIN_POSITIVE) || val == 0.0 {
            converged = true;
            break;
        }
        for i in 0..n {
            omega[i] = w[i] * res[i].abs().max(IRLS_WEIGHT_FLOOR * fscale).powf(p - 2.0);
        }
        let target = weighted_ls(w, f, s, dim, Some(&omega));
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = c.iter().zip(&target).map(|(a, b)| a + step * (b - a)).collect();
            let tr = resid(&trial);
            let tv = obj(&tr);
            if tv < val {
                let rel = (val - tv) / val;
                c = trial;
                res = tr;
                val = tv;
                accepted = true;
                if rel < 1e-15 {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    result(c, Method::ConvexIterative, iterations, converged)
}

/// `‖f − Σ c_k s_k‖_{L^p}` over the given depth-first position ranges.
pub fn residual_norm(frame: &Frame, fd: &[f64], spans: &[std::ops::Range<usize>], coeffs: &[f64], p: f64) -> f64 {
    let dim = frame.dim;
    let mut acc = 0.0;
    for sp in spans {
        for pos in sp.clone() {
            let g: f64 = (0..dim).map(|k| coeffs[k] * frame.s[pos * dim + k]).sum();
            acc += frame.w[pos] * (fd[pos] - g).abs().powf(p);
        }
    }
    acc.powf(1.0 / p)
}

/// Evaluates `E_p(f, R)` for many rings of one tree and one function.
pub struct RingEvaluator<'a> {
    tree: &'a FiltrationTree,
    frame: &'a Frame,
    fd: &'a [f64],
    p: f64,
    w: Vec<f64>,
    f: Vec<f64>,
    s: Vec<f64>,
}

impl<'a> RingEvaluator<'a> {
    /// `fd` holds the values of `f` in depth-first leaf order.
    pub fn new(tree: &'a FiltrationTree, frame: &'a Frame, fd: &'a [f64], p: f64) -> Self {
        RingEvaluator {
            tree,
            frame,
            fd,
            p,
            w: Vec::new(),
            f: Vec::new(),
            s: Vec::new(),
        }
    }

    pub fn best(&mut self, r: Ring) -> Result<BestApprox> {
        let spans = self.tree.ring_spans(r);
        let frame = self.frame;
        if frame.constant && self.p == 2.0 {
            let (mut sw, mut swf) = (0.0, 0.0);
            for sp in &spans {
                for i in sp.clone() {
                    sw += frame.w[i];
                    swf += frame.w[i] * self.fd[i];
                }
            }
            let m = swf / sw;
            let (mut e2, mut n2) = (0.0, 0.0);
            for sp in &spans {
                for i in sp.clone() {
                    let d = self.fd[i] - m;
                    e2 += frame.w[i] * d * d;
                    n2 += frame.w[i] * self.fd[i] * self.fd[i];
                }
            }
            return Ok(BestApprox {
                error: e2.sqrt(),
                coeffs: vec![m / frame.s[spans[0].start]],
                method: Method::Exact,
                iterations: 0,
                converged: true,
                norm: n2.sqrt(),
            });
        }
        let dim = frame.dim;
        self.w.clear();
        self.f.clear();
        self.s.clear();
        for sp in &spans {
            self.w.extend_from_slice(&frame.w[sp.clone()]);
            self.f.extend_from_slice(&self.fd[sp.clone()]);
            self.s.extend_from_slice(&frame.s[sp.start * dim..sp.end * dim]);
        }
        solve(&self.w, &self.f, &self.s, dim, self.p)
    }

    /// `E_p(f, R)` with values below the zero floor reported as 0.
    pub fn error(&mut self, r: Ring) -> Result<f64> {
        let b = self.best(r)?;
        Ok(if b.is_zero() { 0.0 } else { b.error })
    }
}

/// `E_p(f, R)` together with a minimizer.
pub fn best_lp(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    r: Ring,
    p: f64,
) -> Result<BestApprox> {
    check_bound(tree, space, f)?;
    let frame = space.frame(tree);
    let fd = f.dfs_values(tree);
    RingEvaluator::new(tree, &frame, &fd, p).best(r)
}

pub(crate) fn check_bound(tree: &FiltrationTree, space: &LocalSpace, f: &LeafFunction) -> Result<()> {
    if !f.is_bound_to(tree) {
        return Err(param(format!(
            "function has {} values, tree has {} leaves",
            f.len(),
            tree.leaf_count()
        )));
    }
    if !space.is_bound_to(tree) {
        return Err(param("local space is not bound to the tree"));
    }
    Ok(())
}

/// How `f_A` is chosen on each atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NearBestRule {
    /// The best `L^p` approximation.
    Minimizer,
    /// The weighted `L^2` orthoprojection onto `S_A`.
    Orthoprojector,
}

/// Constant in `‖f_A − g‖ ≤ M‖f − g‖` for the exact minimizer: the
/// triangle inequality with `L = 1`. Only at `p = 2`, where the minimizer
/// is the orthogonal projection, does `M = 1` hold for every `f`.
pub(crate) fn minimizer_constant(p: f64, rho: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else {
        2f64.powf(1.0 / rho)
    }
}

/// Whether the `L^2` orthoprojection is an `L^p` contraction onto `S_A`:
/// at `p = 2`, and for constants with `p ≥ 1` by Jensen.
pub(crate) fn contraction(space: &LocalSpace, p: f64) -> bool {
    p == 2.0 || (space.is_constant() && p >= 1.0)
}

/// An element `f_A ∈ S` with `‖f_A − g‖_{L^p(A)} ≤ M‖f − g‖_{L^p(A)}` for
/// every `g ∈ S`, together with the certified `M`.
pub fn near_best(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f: &LeafFunction,
    a: AtomId,
    p: f64,
    m: f64,
    rule: NearBestRule,
) -> Result<(LeafFunction, f64)> {
    let params = NearBestParams::new(m, p)?;
    let best = best_lp(tree, space, f, Ring::atom(a), p)?;
    let certified = match rule {
        NearBestRule::Minimizer => minimizer_constant(p, params.rho),
        NearBestRule::Orthoprojector => {
            if contraction(space, p) {
                1.0
            } else {
                let l2 = best_lp(tree, space, f, Ring::atom(a), 2.0)?;
                let g = space.combine(&l2.coeffs);
                let err = (f - &g).norm_p_on(tree, Ring::atom(a), p);
                let l = if best.is_zero() { 1.0 } else { (err / best.error).max(1.0) };
                let rho = params.rho;
                (l.powf(rho) + 1.0).powf(1.0 / rho)
            }
        }
    };
    if m < certified * (1.0 - 1e-12) {
        return Err(Error::NearBest {
            requested: m,
            certified,
        });
    }
    let coeffs = match rule {
        NearBestRule::Minimizer => best.coeffs,
        NearBestRule::Orthoprojector => best_lp(tree, space, f, Ring::atom(a), 2.0)?.coeffs,
    };
    Ok((space.combine(&coeffs), certified))
}

/// Number of members `R` of `family` with `E_p(f0, R) ≠ 0`, where
/// `f0 = g·1_A` for some `g ∈ S`.
pub fn lemma_bernst_count(
    tree: &FiltrationTree,
    space: &LocalSpace,
    f0: &LeafFunction,
    a: AtomId,
    family: &[Ring],
    p: f64,
) -> Result<usize> {
    check_bound(tree, space, f0)?;
    let inside = tree.ring_mask(Ring::atom(a));
    if f0.values().iter().zip(&inside).any(|(v, &m)| !m && *v != 0.0) {
        return Err(Error::Form("f0 does not vanish outside its atom".into()));
    }
    if !best_lp(tree, space, f0, Ring::atom(a), p)?.is_zero() {
        return Err(Error::Form("f0 restricted to its atom is not in S".into()));
    }
    if !tree.family_disjoint(family) {
        return Err(param("family members overlap"));
    }
    let frame = space.frame(tree);
    let fd = f0.dfs_values(tree);
    let mut ev = RingEvaluator::new(tree, &frame, &fd, p);
    let mut count = 0;
    for r in family {
        if !ev.best(*r)?.is_zero() {
            count += 1;
        }
    }
    Ok(count)
}

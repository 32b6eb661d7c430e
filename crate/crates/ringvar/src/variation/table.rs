//! Precomputed `E_p` values for every atom and ring of a tree.

use rayon::prelude::*;

use crate::error::Result;
use crate::filtration::{AtomId, FiltrationTree, Ring};
use crate::local_basis::Frame;
use crate::lp_approx::RingEvaluator;

/// `E_p(f, A)` and `E_p(f, A \ B)` (zero-floored) with the matching
/// `‖f‖_{L^p}` values. Ring values are aligned with `tree.descendants(a)`.
pub(crate) struct RingTable {
    pub atom_err: Vec<f64>,
    pub atom_norm: Vec<f64>,
    pub ring_err: Vec<Vec<f64>>,
    pub ring_norm: Vec<Vec<f64>>,
    /// Atoms not strictly inside an atom on which `f ∈ S`.
    pub active: Vec<bool>,
    /// Atoms with `E_p(f, A) = 0`.
    pub zero: Vec<bool>,
}

impl RingTable {
    /// With `prune`, rings whose inner atom lies strictly inside a zero atom
    /// are skipped (left as NaN) and zero atoms get no ring values at all.
    pub fn build(tree: &FiltrationTree, frame: &Frame, fd: &[f64], p: f64, prune: bool) -> Result<Self> {
        let n = tree.atom_count();
        let atoms: Vec<(f64, f64, bool)> = (0..n)
            .into_par_iter()
            .map_init(
                || RingEvaluator::new(tree, frame, fd, p),
                |ev, a| {
                    ev.best(Ring::atom(a)).map(|b| {
                        let z = b.is_zero();
                        (if z { 0.0 } else { b.error }, b.norm, z)
                    })
                },
            )
            .collect::<Result<_>>()?;
        let zero: Vec<bool> = atoms.iter().map(|x| x.2).collect();
        let mut active = vec![true; n];
        if prune {
            for &a in tree.preorder() {
                if let Some(par) = tree.parent(a) {
                    active[a] = active[par] && !zero[par];
                }
            }
        }
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map_init(
                || RingEvaluator::new(tree, frame, fd, p),
                |ev, a| -> Result<(Vec<f64>, Vec<f64>)> {
                    let desc = tree.descendants(a);
                    if !active[a] || (prune && zero[a]) {
                        return Ok((Vec::new(), Vec::new()));
                    }
                    let mut err = Vec::with_capacity(desc.len());
                    let mut norm = Vec::with_capacity(desc.len());
                    for &b in desc {
                        if !active[b] {
                            err.push(f64::NAN);
                            norm.push(f64::NAN);
                            continue;
                        }
                        let r = ev.best(Ring {
                            outer: a,
                            inner: Some(b),
                        })?;
                        err.push(if r.is_zero() { 0.0 } else { r.error });
                        norm.push(r.norm);
                    }
                    Ok((err, norm))
                },
            )
            .collect::<Result<_>>()?;
        let (ring_err, ring_norm) = rows.into_iter().unzip();
        Ok(RingTable {
            atom_err: atoms.iter().map(|x| x.0).collect(),
            atom_norm: atoms.iter().map(|x| x.1).collect(),
            ring_err,
            ring_norm,
            active,
            zero,
        })
    }

    /// `E_p` of a ring, read from the table.
    pub fn err(&self, tree: &FiltrationTree, r: Ring) -> f64 {
        match r.inner {
            None => self.atom_err[r.outer],
            Some(b) => self.ring_err[r.outer][desc_index(tree, r.outer, b)],
        }
    }
}

/// Position of `b` within `tree.descendants(a)`.
pub(crate) fn desc_index(tree: &FiltrationTree, a: AtomId, b: AtomId) -> usize {
    let d = tree.descendants(a);
    let pre = |x: AtomId| tree.preorder_index(x);
    pre(b) - pre(d[0])
}

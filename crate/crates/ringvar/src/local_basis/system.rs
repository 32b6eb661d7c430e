//! The local orthonormal system Φ.

use std::ops::Range;

use serde::Serialize;

use super::{fix_sign, left_singular_basis, LeafFunction, LocalSpace};
use crate::error::{param, Error, Result};
use crate::filtration::{AtomId, FiltrationTree};
use crate::linalg::Mat;

/// One basis function, stored densely on the span of its support atom.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub level: usize,
    pub support: AtomId,
    /// First depth-first position of the support.
    pub start: usize,
    /// Values on positions `start..start + values.len()`.
    pub values: Vec<f64>,
}

/// Orthonormal basis of `S` on Ω (level 0) followed by orthonormal bases of
/// `range(P_n − P_{n−1})` for every split step `n`, in step order.
#[derive(Clone, Debug)]
pub struct LocalSystem {
    elements: Vec<Element>,
    levels: Vec<Range<usize>>,
    weights: Vec<f64>,
    dfs_leaf: Vec<usize>,
}

#[derive(Serialize)]
struct ElementExport {
    level: usize,
    support_atom: u64,
    entries: Vec<(u64, f64)>,
}

impl LocalSystem {
    /// Builds Φ for `S` on `tree`.
    pub fn build(tree: &FiltrationTree, space: &LocalSpace) -> Result<Self> {
        if !space.is_bound_to(tree) {
            return Err(param("local space is not bound to the tree"));
        }
        let frame = space.frame(tree);
        let mut elements = Vec::new();
        let mut levels = Vec::with_capacity(tree.split_count() + 1);

        let root = tree.root();
        let span = tree.span(root);
        let q = frame.orthonormal_on(std::slice::from_ref(&span));
        if q.is_empty() {
            return Err(Error::Degenerate {
                atom: tree.label(root),
            });
        }
        // S on each atom is spanned by the restriction of its parent's basis,
        // so truncation never drops a direction a child keeps
        let mut atom_basis: Vec<Option<Vec<Vec<f64>>>> = vec![None; tree.atom_count()];
        atom_basis[root] = Some(q.clone());
        let scan: Vec<usize> = (0..span.len()).collect();
        for u in q {
            let mut v: Vec<f64> = u.iter().zip(&frame.w[span.clone()]).map(|(x, w)| x / w.sqrt()).collect();
            fix_sign(&mut v, &scan);
            elements.push(Element {
                level: 0,
                support: root,
                start: span.start,
                values: v,
            });
        }
        levels.push(0..elements.len());

        for step in 1..=tree.split_count() {
            let a = tree.split_atom(step);
            let first = elements.len();
            let span = tree.span(a);
            let kids = tree.children(a);
            // scan order for the sign rule: A' before A'' in binary mode
            let order: Vec<AtomId> = match tree.primed_children(a) {
                Some((c1, c2)) => vec![c1, c2],
                None => kids.to_vec(),
            };
            let scan: Vec<usize> = order
                .iter()
                .flat_map(|&c| tree.span(c).map(|p| p - span.start))
                .collect();

            if frame.constant && kids.len() == 2 {
                let (c1, c2) = (order[0], order[1]);
                let (m1, m2) = (tree.measure(c1), tree.measure(c2));
                let m = m1 + m2;
                let hi = (m2 / (m1 * m)).sqrt();
                let lo = -(m1 / (m2 * m)).sqrt();
                let mut v = vec![0.0; span.len()];
                for p in tree.span(c1) {
                    v[p - span.start] = hi;
                }
                for p in tree.span(c2) {
                    v[p - span.start] = lo;
                }
                elements.push(Element {
                    level: step,
                    support: a,
                    start: span.start,
                    values: v,
                });
                levels.push(first..elements.len());
                continue;
            }

            let qa = match atom_basis[a].take() {
                Some(q) => q,
                None => frame.orthonormal_on(std::slice::from_ref(&span)),
            };
            if qa.is_empty() {
                return Err(Error::Degenerate { atom: tree.label(a) });
            }
            let mut cols: Vec<Vec<f64>> = Vec::new();
            for &c in kids {
                let cs = tree.span(c);
                let off = cs.start - span.start;
                let restricted = Mat::from_fn(cs.len(), qa.len(), |i, k| qa[k][off + i]);
                let qc = left_singular_basis(restricted, 0.0);
                if qc.is_empty() {
                    return Err(Error::Degenerate { atom: tree.label(c) });
                }
                if !tree.is_leaf(c) {
                    atom_basis[c] = Some(qc.clone());
                }
                for u in qc {
                    let mut r = vec![0.0; span.len()];
                    for (i, p) in cs.clone().enumerate() {
                        r[p - span.start] = u[i];
                    }
                    for _pass in 0..2 {
                        for qv in &qa {
                            let d: f64 = qv.iter().zip(&r).map(|(x, y)| x * y).sum();
                            for (ri, qi) in r.iter_mut().zip(qv) {
                                *ri -= d * qi;
                            }
                        }
                    }
                    cols.push(r);
                }
            }
            let mat = Mat::from_fn(span.len(), cols.len(), |i, j| cols[j][i]);
            for u in left_singular_basis(mat, 1.0) {
                let mut v: Vec<f64> = u
                    .iter()
                    .zip(&frame.w[span.clone()])
                    .map(|(x, w)| x / w.sqrt())
                    .collect();
                fix_sign(&mut v, &scan);
                elements.push(Element {
                    level: step,
                    support: a,
                    start: span.start,
                    values: v,
                });
            }
            levels.push(first..elements.len());
        }
        Ok(LocalSystem {
            elements,
            levels,
            weights: frame.w,
            dfs_leaf: tree.dfs_leaves().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, j: usize) -> &Element {
        &self.elements[j]
    }

    /// Element indices at split step `n` (0 for the basis of `S`).
    pub fn level(&self, n: usize) -> Range<usize> {
        self.levels[n].clone()
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// The element as a leaf function.
    pub fn function(&self, j: usize) -> LeafFunction {
        let e = &self.elements[j];
        let mut v = vec![0.0; self.dfs_leaf.len()];
        for (i, x) in e.values.iter().enumerate() {
            v[self.dfs_leaf[e.start + i]] = *x;
        }
        LeafFunction::new(v)
    }

    /// `L^p` norm of element `j`.
    pub fn norm_p(&self, j: usize, p: f64) -> f64 {
        let e = &self.elements[j];
        let w = &self.weights[e.start..e.start + e.values.len()];
        e.values
            .iter()
            .zip(w)
            .map(|(x, w)| w * x.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    fn dfs(&self, f: &LeafFunction) -> Vec<f64> {
        self.dfs_leaf.iter().map(|&li| f.values()[li]).collect()
    }

    /// `c_j = ⟨f, φ_j⟩`.
    pub fn expand(&self, f: &LeafFunction) -> Vec<f64> {
        let fd = self.dfs(f);
        self.elements
            .iter()
            .map(|e| {
                e.values
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let p = e.start + i;
                        self.weights[p] * x * fd[p]
                    })
                    .sum()
            })
            .collect()
    }

    /// `Σ c_j φ_j`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> LeafFunction {
        self.reconstruct_subset(coeffs.iter().copied().enumerate())
    }

    /// `Σ c_j φ_j` over the given `(j, c_j)` pairs.
    pub fn reconstruct_subset(&self, terms: impl IntoIterator<Item = (usize, f64)>) -> LeafFunction {
        let mut out = vec![0.0; self.dfs_leaf.len()];
        for (j, c) in terms {
            if c == 0.0 {
                continue;
            }
            let e = &self.elements[j];
            for (i, x) in e.values.iter().enumerate() {
                out[e.start + i] += c * x;
            }
        }
        let mut v = vec![0.0; out.len()];
        for (p, x) in out.into_iter().enumerate() {
            v[self.dfs_leaf[p]] = x;
        }
        LeafFunction::new(v)
    }

    /// Largest deviation of the Gram matrix from the identity. Elements
    /// whose supports are disjoint are orthogonal structurally and skipped.
    pub fn gram_deviation(&self, tree: &FiltrationTree) -> f64 {
        let mut by_atom: Vec<Vec<usize>> = vec![Vec::new(); tree.atom_count()];
        for (j, e) in self.elements.iter().enumerate() {
            by_atom[e.support].push(j);
        }
        let mut dev: f64 = 0.0;
        for (j, e) in self.elements.iter().enumerate() {
            // pair with every element supported on the same atom or an ancestor
            let mut anc = Some(e.support);
            while let Some(b) = anc {
                for &k in &by_atom[b] {
                    if b == e.support && k < j {
                        continue;
                    }
                    let g = &self.elements[k];
                    let ip: f64 = e
                        .values
                        .iter()
                        .enumerate()
                        .map(|(i, x)| {
                            let p = e.start + i;
                            self.weights[p] * x * g.values[p - g.start]
                        })
                        .sum();
                    let target = if k == j { 1.0 } else { 0.0 };
                    dev = dev.max((ip - target).abs());
                }
                anc = tree.parent(b);
            }
        }
        dev
    }

    /// p-normalized view `ψ_j = φ_j/‖φ_j‖_p`.
    pub fn p_normalize(&self, p: f64) -> Result<PNormalized<'_>> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(param(format!("p must be in (0, ∞), got {p}")));
        }
        let norms = (0..self.len()).map(|j| self.norm_p(j, p)).collect();
        Ok(PNormalized {
            system: self,
            p,
            norms,
        })
    }

    /// JSON list of `{level, support_atom, entries: [[leaf-id, value]]}`.
    pub fn to_json(&self, tree: &FiltrationTree) -> String {
        let v: Vec<ElementExport> = self
            .elements
            .iter()
            .map(|e| ElementExport {
                level: e.level,
                support_atom: tree.label(e.support),
                entries: e
                    .values
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (tree.leaf_ids()[self.dfs_leaf[e.start + i]], *x))
                    .collect(),
            })
            .collect();
        serde_json::to_string(&v).expect("system serializes")
    }
}

/// Φ rescaled to unit `L^p` norm. Norms are computed once on creation.
#[derive(Clone, Debug)]
pub struct PNormalized<'a> {
    system: &'a LocalSystem,
    p: f64,
    norms: Vec<f64>,
}

impl<'a> PNormalized<'a> {
    pub fn system(&self) -> &'a LocalSystem {
        self.system
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Coefficients `c_j‖φ_j‖_p` of `f = Σ (c_j‖φ_j‖_p) ψ_j`.
    pub fn coefficients(&self, f: &LeafFunction) -> Vec<f64> {
        self.from_l2(&self.system.expand(f))
    }

    pub fn from_l2(&self, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.norms).map(|(c, n)| c * n).collect()
    }

    pub fn to_l2(&self, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.norms).map(|(c, n)| c / n).collect()
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> LeafFunction {
        self.system.reconstruct(&self.to_l2(coeffs))
    }

    /// `‖Σ_{j∈Λ} ψ_j‖_p / (card Λ)^{1/p}`.
    pub fn temlyakov_ratio(&self, tree: &FiltrationTree, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let g = self.system.reconstruct_subset(indices.iter().map(|&j| (j, 1.0 / self.norms[j])));
        g.norm_p(tree, self.p) / (indices.len() as f64).powf(1.0 / self.p)
    }
}


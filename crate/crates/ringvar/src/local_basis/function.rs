use std::ops::{Add, Mul, Neg, Sub};

use crate::filtration::{FiltrationTree, Ring};

/// A function on Ω, stored by leaf index.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFunction {
    values: Vec<f64>,
}

impl LeafFunction {
    pub fn new(values: Vec<f64>) -> Self {
        LeafFunction { values }
    }

    pub fn zeros(n: usize) -> Self {
        LeafFunction {
            values: vec![0.0; n],
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        LeafFunction {
            values: vec![c; n],
        }
    }

    /// `1_R`.
    pub fn indicator(tree: &FiltrationTree, r: Ring) -> Self {
        let mut f = Self::zeros(tree.leaf_count());
        for s in tree.ring_spans(r) {
            for &li in &tree.dfs_leaves()[s] {
                f.values[li] = 1.0;
            }
        }
        f
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_bound_to(&self, tree: &FiltrationTree) -> bool {
        self.values.len() == tree.leaf_count()
    }

    /// Values in depth-first leaf order.
    pub fn dfs_values(&self, tree: &FiltrationTree) -> Vec<f64> {
        tree.dfs_leaves().iter().map(|&li| self.values[li]).collect()
    }

    pub fn from_dfs(tree: &FiltrationTree, dfs: &[f64]) -> Self {
        let mut v = vec![0.0; dfs.len()];
        for (pos, &li) in tree.dfs_leaves().iter().enumerate() {
            v[li] = dfs[pos];
        }
        LeafFunction { values: v }
    }

    /// `self += a·g`.
    pub fn axpy(&mut self, a: f64, g: &LeafFunction) {
        for (x, y) in self.values.iter_mut().zip(&g.values) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> LeafFunction {
        LeafFunction {
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }

    /// `(Σ w|f|^p)^{1/p}`.
    pub fn norm_p(&self, tree: &FiltrationTree, p: f64) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(tree.leaf_weights())
            .map(|(x, w)| w * x.abs().powf(p))
            .sum();
        s.powf(1.0 / p)
    }

    /// `‖f 1_R‖_p`.
    pub fn norm_p_on(&self, tree: &FiltrationTree, r: Ring, p: f64) -> f64 {
        let w = tree.leaf_weights();
        let mut s = 0.0;
        for span in tree.ring_spans(r) {
            for &li in &tree.dfs_leaves()[span] {
                s += w[li] * self.values[li].abs().powf(p);
            }
        }
        s.powf(1.0 / p)
    }

    /// Weighted inner product `Σ w f g`.
    pub fn inner(&self, tree: &FiltrationTree, g: &LeafFunction) -> f64 {
        self.values
            .iter()
            .zip(&g.values)
            .zip(tree.leaf_weights())
            .map(|((x, y), w)| w * x * y)
            .sum()
    }

    pub fn max_abs_diff(&self, g: &LeafFunction) -> f64 {
        self.values
            .iter()
            .zip(&g.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Mean with respect to the leaf weights.
    pub fn mean(&self, tree: &FiltrationTree) -> f64 {
        self.values
            .iter()
            .zip(tree.leaf_weights())
            .map(|(x, w)| w * x)
            .sum()
    }
}

impl Add for &LeafFunction {
    type Output = LeafFunction;
    fn add(self, rhs: &LeafFunction) -> LeafFunction {
        LeafFunction {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &LeafFunction {
    type Output = LeafFunction;
    fn sub(self, rhs: &LeafFunction) -> LeafFunction {
        LeafFunction {
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &LeafFunction {
    type Output = LeafFunction;
    fn neg(self) -> LeafFunction {
        self.scaled(-1.0)
    }
}

impl Mul<&LeafFunction> for f64 {
    type Output = LeafFunction;
    fn mul(self, rhs: &LeafFunction) -> LeafFunction {
        rhs.scaled(self)
    }
}

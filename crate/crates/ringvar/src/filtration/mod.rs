//! Finite weighted leaf sets with binary or ν-ary filtrations.
//!
//! Atoms are stored in creation order (root first, then the children of
//! each split in split order). Leaves are laid out in depth-first order so
//! that every atom owns a contiguous range of leaf positions; a ring
//! `A \ B` is then at most two ranges.

mod build;
mod schema;

use std::collections::HashMap;
use std::ops::Range;

pub use build::{
    build_dyadic_interval, build_fractal_tree, build_random_tree, build_tensor_square, FractalTrees, TensorTrees,
    TreeBuilder,
};
pub use schema::{AtomAttrs, FiltrationSpec, LeafSpec, ModeTag, RingSpec, SplitSpec};

use crate::error::{Error, Result};

/// Internal atom index.
pub type AtomId = usize;

/// Default leaf capacity; `RINGVAR_MAX_LEAVES` overrides it.
pub const DEFAULT_MAX_LEAVES: usize = 1 << 24;

pub fn leaf_capacity() -> usize {
    std::env::var("RINGVAR_MAX_LEAVES")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_LEAVES)
}

pub(crate) fn check_capacity(what: &'static str, requested: usize) -> Result<()> {
    let limit = leaf_capacity();
    if requested > limit {
        return Err(Error::Capacity {
            what,
            requested,
            limit,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Binary,
    Nary(usize),
}

impl Mode {
    /// Maximal number of children per split.
    pub fn nu(self) -> usize {
        match self {
            Mode::Binary => 2,
            Mode::Nary(nu) => nu,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    label: u64,
    parent: Option<AtomId>,
    children: Vec<AtomId>,
    start: usize,
    end: usize,
    pre: usize,
    pre_end: usize,
    weight: f64,
    born: usize,
    split_step: Option<usize>,
    depth: usize,
    leaf: Option<usize>,
    diag: Option<f64>,
}

/// A finite rooted measure tree. Immutable after construction.
#[derive(Clone, Debug)]
pub struct FiltrationTree {
    mode: Mode,
    nodes: Vec<Node>,
    leaf_ids: Vec<u64>,
    leaf_weights: Vec<f64>,
    leaf_node: Vec<AtomId>,
    dfs_leaf: Vec<usize>,
    leaf_pos: Vec<usize>,
    preorder: Vec<AtomId>,
    splits: Vec<AtomId>,
    labels: HashMap<u64, AtomId>,
}

/// `outer \ inner`, with `inner` a strict descendant of `outer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ring {
    pub outer: AtomId,
    pub inner: Option<AtomId>,
}

impl Ring {
    pub fn atom(a: AtomId) -> Ring {
        Ring {
            outer: a,
            inner: None,
        }
    }

    pub fn new(tree: &FiltrationTree, outer: AtomId, inner: Option<AtomId>) -> Result<Ring> {
        if outer >= tree.atom_count() {
            return Err(Error::InvalidTree(format!("unknown atom index {outer}")));
        }
        if let Some(b) = inner {
            if b >= tree.atom_count() || !tree.is_strict_ancestor(outer, b) {
                return Err(Error::InvalidTree(format!(
                    "ring {} \\ {}: inner is not a strict descendant",
                    tree.label(outer),
                    tree.label(b.min(tree.atom_count() - 1))
                )));
            }
        }
        Ok(Ring { outer, inner })
    }

    pub fn is_atom(&self) -> bool {
        self.inner.is_none()
    }
}

/// `X_0 ⊃ X_1 ⊃ ⋯ ⊃ X_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub atoms: Vec<AtomId>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.atoms.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks nesting: each atom a child of the previous one, or any strict
    /// descendant when `relaxed`.
    pub fn validate(&self, tree: &FiltrationTree, relaxed: bool) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidTree("empty chain".into()));
        }
        for w in self.atoms.windows(2) {
            let ok = if relaxed {
                tree.is_strict_ancestor(w[0], w[1])
            } else {
                tree.parent(w[1]) == Some(w[0])
            };
            if !ok {
                return Err(Error::InvalidTree(format!(
                    "chain step {} -> {} is not nested",
                    tree.label(w[0]),
                    tree.label(w[1])
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of re-checking every tree invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub weights_positive: bool,
    pub weight_sum_error: f64,
    pub children_partition: bool,
    pub arity_ok: bool,
    pub binary_order_ok: bool,
    pub max_additivity_error: f64,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.weights_positive
            && self.weight_sum_error <= 1e-12
            && self.children_partition
            && self.arity_ok
            && self.binary_order_ok
            && self.max_additivity_error <= 1e-14
    }
}

impl FiltrationTree {
    /// Builds a tree from its serialized description, checking all invariants.
    pub fn from_spec(spec: &FiltrationSpec) -> Result<Self> {
        let mode = match (spec.mode, spec.nu) {
            (ModeTag::Binary, _) => Mode::Binary,
            (ModeTag::Nary, Some(nu)) if nu >= 2 => Mode::Nary(nu),
            (ModeTag::Nary, nu) => {
                return Err(Error::InvalidTree(format!("nary mode needs nu >= 2, got {nu:?}")))
            }
        };
        check_capacity("leaves", spec.leaves.len())?;
        if spec.leaves.is_empty() {
            return Err(Error::InvalidTree("no leaves".into()));
        }
        let mut leaf_index = HashMap::with_capacity(spec.leaves.len());
        let mut sum = 0.0;
        for (i, l) in spec.leaves.iter().enumerate() {
            if !(l.w > 0.0 && l.w.is_finite()) {
                return Err(Error::InvalidTree(format!("leaf {} has weight {}", l.id, l.w)));
            }
            if leaf_index.insert(l.id, i).is_some() {
                return Err(Error::InvalidTree(format!("duplicate leaf id {}", l.id)));
            }
            sum += l.w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::WeightSum { sum });
        }

        let root_label = match spec.splits.first() {
            Some(s) => s.parent,
            None => {
                if spec.leaves.len() != 1 {
                    return Err(Error::InvalidTree(
                        "several leaves but no splits".into(),
                    ));
                }
                spec.leaves[0].id
            }
        };
        let mut nodes: Vec<Node> = Vec::with_capacity(2 * spec.leaves.len());
        let mut labels: HashMap<u64, AtomId> = HashMap::with_capacity(2 * spec.leaves.len());
        let fresh = |label: u64, parent: Option<AtomId>, born: usize, depth: usize| Node {
            label,
            parent,
            children: Vec::new(),
            start: 0,
            end: 0,
            pre: 0,
            pre_end: 0,
            weight: 0.0,
            born,
            split_step: None,
            depth,
            leaf: None,
            diag: None,
        };
        nodes.push(fresh(root_label, None, 0, 0));
        labels.insert(root_label, 0);
        let mut splits = Vec::with_capacity(spec.splits.len());
        for (k, s) in spec.splits.iter().enumerate() {
            let step = k + 1;
            let a = *labels.get(&s.parent).ok_or_else(|| {
                Error::InvalidTree(format!("split {step} refers to unknown atom {}", s.parent))
            })?;
            if nodes[a].split_step.is_some() {
                return Err(Error::InvalidTree(format!("atom {} split twice", s.parent)));
            }
            if leaf_index.contains_key(&s.parent) {
                return Err(Error::InvalidTree(format!("leaf {} cannot be split", s.parent)));
            }
            let count = s.children.len();
            match mode {
                Mode::Binary if count != 2 => {
                    return Err(Error::BinaryMode {
                        atom: s.parent,
                        count,
                    })
                }
                Mode::Nary(nu) if !(2..=nu).contains(&count) => {
                    return Err(Error::Arity {
                        atom: s.parent,
                        count,
                        nu,
                    })
                }
                _ => {}
            }
            nodes[a].split_step = Some(step);
            let depth = nodes[a].depth + 1;
            for &c in &s.children {
                if labels.contains_key(&c) {
                    return Err(Error::ChildOverlap { atom: c });
                }
                let id = nodes.len();
                nodes.push(fresh(c, Some(a), step, depth));
                labels.insert(c, id);
                nodes[a].children.push(id);
            }
            splits.push(a);
        }
        let mut leaf_node = vec![usize::MAX; spec.leaves.len()];
        for (id, node) in nodes.iter_mut().enumerate() {
            if node.children.is_empty() {
                let li = *leaf_index.get(&node.label).ok_or_else(|| {
                    Error::InvalidTree(format!("atom {} is never split and is not a leaf", node.label))
                })?;
                node.leaf = Some(li);
                leaf_node[li] = id;
            }
        }
        if let Some(li) = leaf_node.iter().position(|&n| n == usize::MAX) {
            return Err(Error::InvalidTree(format!(
                "leaf {} is not reachable from the root",
                spec.leaves[li].id
            )));
        }
        for (label, attrs) in &spec.attrs {
            let a = *labels
                .get(label)
                .ok_or_else(|| Error::InvalidTree(format!("attribute for unknown atom {label}")))?;
            nodes[a].diag = Some(attrs.diag);
        }
        let leaf_weights: Vec<f64> = spec.leaves.iter().map(|l| l.w).collect();
        let leaf_ids: Vec<u64> = spec.leaves.iter().map(|l| l.id).collect();
        Ok(Self::finish(mode, nodes, leaf_ids, leaf_weights, leaf_node, splits, labels))
    }

    fn finish(
        mode: Mode,
        mut nodes: Vec<Node>,
        leaf_ids: Vec<u64>,
        leaf_weights: Vec<f64>,
        leaf_node: Vec<AtomId>,
        splits: Vec<AtomId>,
        labels: HashMap<u64, AtomId>,
    ) -> Self {
        let n_leaves = leaf_ids.len();
        let mut dfs_leaf = Vec::with_capacity(n_leaves);
        let mut preorder = Vec::with_capacity(nodes.len());
        // iterative DFS: (node, entered)
        let mut stack = vec![(0usize, false)];
        while let Some((a, done)) = stack.pop() {
            if done {
                nodes[a].end = dfs_leaf.len();
                nodes[a].pre_end = preorder.len();
                let w = if let Some(li) = nodes[a].leaf {
                    leaf_weights[li]
                } else {
                    nodes[a].children.iter().map(|&c| nodes[c].weight).sum()
                };
                nodes[a].weight = w;
                continue;
            }
            nodes[a].start = dfs_leaf.len();
            nodes[a].pre = preorder.len();
            preorder.push(a);
            stack.push((a, true));
            if let Some(li) = nodes[a].leaf {
                dfs_leaf.push(li);
            }
            for &c in nodes[a].children.iter().rev() {
                stack.push((c, false));
            }
        }
        let mut leaf_pos = vec![0; n_leaves];
        for (pos, &li) in dfs_leaf.iter().enumerate() {
            leaf_pos[li] = pos;
        }
        FiltrationTree {
            mode,
            nodes,
            leaf_ids,
            leaf_weights,
            leaf_node,
            dfs_leaf,
            leaf_pos,
            preorder,
            splits,
            labels,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&FiltrationSpec::from_json(text)?)
    }

    pub fn to_json(&self) -> String {
        self.to_spec().to_json()
    }

    /// Serializes the tree; `from_spec(to_spec(t))` reproduces `t`.
    pub fn to_spec(&self) -> FiltrationSpec {
        let (mode, nu) = match self.mode {
            Mode::Binary => (ModeTag::Binary, None),
            Mode::Nary(nu) => (ModeTag::Nary, Some(nu)),
        };
        FiltrationSpec {
            mode,
            nu,
            leaves: self
                .leaf_ids
                .iter()
                .zip(&self.leaf_weights)
                .map(|(&id, &w)| LeafSpec { id, w })
                .collect(),
            splits: self
                .splits
                .iter()
                .map(|&a| SplitSpec {
                    parent: self.nodes[a].label,
                    children: self.nodes[a].children.iter().map(|&c| self.nodes[c].label).collect(),
                })
                .collect(),
            attrs: self
                .nodes
                .iter()
                .filter_map(|n| n.diag.map(|d| (n.label, AtomAttrs { diag: d })))
                .collect(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Maximal arity ν (2 in binary mode).
    pub fn nu(&self) -> usize {
        self.mode.nu()
    }

    pub fn root(&self) -> AtomId {
        0
    }

    pub fn atom_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_ids.len()
    }

    pub fn split_count(&self) -> usize {
        self.splits.len()
    }

    /// Atom subdivided at step `n` (1-based).
    pub fn split_atom(&self, n: usize) -> AtomId {
        self.splits[n - 1]
    }

    pub fn split_order(&self) -> &[AtomId] {
        &self.splits
    }

    pub fn label(&self, a: AtomId) -> u64 {
        self.nodes[a].label
    }

    pub fn atom_by_label(&self, label: u64) -> Option<AtomId> {
        self.labels.get(&label).copied()
    }

    pub fn parent(&self, a: AtomId) -> Option<AtomId> {
        self.nodes[a].parent
    }

    pub fn children(&self, a: AtomId) -> &[AtomId] {
        &self.nodes[a].children
    }

    pub fn is_leaf(&self, a: AtomId) -> bool {
        self.nodes[a].children.is_empty()
    }

    /// Leaf index of a leaf atom.
    pub fn leaf_of(&self, a: AtomId) -> Option<usize> {
        self.nodes[a].leaf
    }

    pub fn leaf_atom(&self, leaf: usize) -> AtomId {
        self.leaf_node[leaf]
    }

    pub fn measure(&self, a: AtomId) -> f64 {
        self.nodes[a].weight
    }

    pub fn depth(&self, a: AtomId) -> usize {
        self.nodes[a].depth
    }

    pub fn diag(&self, a: AtomId) -> Option<f64> {
        self.nodes[a].diag
    }

    /// Step at which the atom appeared (0 for the root).
    pub fn born(&self, a: AtomId) -> usize {
        self.nodes[a].born
    }

    /// Step at which the atom is subdivided, if ever.
    pub fn split_step(&self, a: AtomId) -> Option<usize> {
        self.nodes[a].split_step
    }

    /// External ids of the leaves, indexed by leaf index.
    pub fn leaf_ids(&self) -> &[u64] {
        &self.leaf_ids
    }

    pub fn leaf_weights(&self) -> &[f64] {
        &self.leaf_weights
    }

    /// Leaf index at each depth-first position.
    pub fn dfs_leaves(&self) -> &[usize] {
        &self.dfs_leaf
    }

    pub fn leaf_position(&self, leaf: usize) -> usize {
        self.leaf_pos[leaf]
    }

    /// Depth-first leaf positions covered by `a`.
    pub fn span(&self, a: AtomId) -> Range<usize> {
        self.nodes[a].start..self.nodes[a].end
    }

    pub fn atom_size(&self, a: AtomId) -> usize {
        self.nodes[a].end - self.nodes[a].start
    }

    /// Atoms in preorder.
    pub fn preorder(&self) -> &[AtomId] {
        &self.preorder
    }

    /// Position of `a` in the preorder listing.
    pub fn preorder_index(&self, a: AtomId) -> usize {
        self.nodes[a].pre
    }

    /// Strict descendants of `a`, in preorder.
    pub fn descendants(&self, a: AtomId) -> &[AtomId] {
        let n = &self.nodes[a];
        &self.preorder[n.pre + 1..n.pre_end]
    }

    /// Whether `b` lies strictly below `a`.
    pub fn is_strict_ancestor(&self, a: AtomId, b: AtomId) -> bool {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        a != b && na.pre <= nb.pre && nb.pre_end <= na.pre_end
    }

    /// Whether `b` equals `a` or lies below it.
    pub fn contains_atom(&self, a: AtomId, b: AtomId) -> bool {
        a == b || self.is_strict_ancestor(a, b)
    }

    /// `(A', A'')` of a binary split: the lighter child first, ties resolved
    /// by listing order.
    pub fn primed_children(&self, a: AtomId) -> Option<(AtomId, AtomId)> {
        match self.nodes[a].children.as_slice() {
            &[c0, c1] => {
                if self.nodes[c1].weight < self.nodes[c0].weight {
                    Some((c1, c0))
                } else {
                    Some((c0, c1))
                }
            }
            _ => None,
        }
    }

    /// Atoms of the partition generated after `n` splits, in preorder.
    pub fn atoms_at_level(&self, n: usize) -> Vec<AtomId> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(a) = stack.pop() {
            match self.nodes[a].split_step {
                Some(s) if s <= n => {
                    for &c in self.nodes[a].children.iter().rev() {
                        stack.push(c);
                    }
                }
                _ => out.push(a),
            }
        }
        out
    }

    /// Depth-first position ranges of a ring.
    pub fn ring_spans(&self, r: Ring) -> [Range<usize>; 2] {
        let a = self.span(r.outer);
        match r.inner {
            None => [a.clone(), a.end..a.end],
            Some(b) => {
                let b = self.span(b);
                [a.start..b.start, b.end..a.end]
            }
        }
    }

    pub fn ring_measure(&self, r: Ring) -> f64 {
        match r.inner {
            None => self.measure(r.outer),
            Some(b) => self.measure(r.outer) - self.measure(b),
        }
    }

    /// Leaf indices of a ring, sorted ascending.
    pub fn ring_leaves(&self, r: Ring) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .ring_spans(r)
            .into_iter()
            .flat_map(|s| self.dfs_leaf[s].iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    /// Membership mask over leaf indices.
    pub fn ring_mask(&self, r: Ring) -> Vec<bool> {
        let mut m = vec![false; self.leaf_count()];
        for s in self.ring_spans(r) {
            for &li in &self.dfs_leaf[s] {
                m[li] = true;
            }
        }
        m
    }

    pub fn rings_disjoint(&self, r1: Ring, r2: Ring) -> bool {
        for s1 in self.ring_spans(r1) {
            for s2 in self.ring_spans(r2) {
                if s1.start.max(s2.start) < s1.end.min(s2.end) {
                    return false;
                }
            }
        }
        true
    }

    pub fn family_disjoint(&self, family: &[Ring]) -> bool {
        let mut covered = vec![false; self.leaf_count()];
        for r in family {
            for s in self.ring_spans(*r) {
                for pos in s {
                    if covered[pos] {
                        return false;
                    }
                    covered[pos] = true;
                }
            }
        }
        true
    }

    /// Whether `family` is a disjoint cover of Ω.
    pub fn is_partition(&self, family: &[Ring]) -> bool {
        let total: usize = family
            .iter()
            .map(|r| self.ring_spans(*r).iter().map(|s| s.len()).sum::<usize>())
            .sum();
        total == self.leaf_count() && self.family_disjoint(family)
    }

    /// Every ring `A \ B` with `B` a strict descendant, plus every atom.
    /// Grouped by outer atom in creation order.
    pub fn enumerate_rings(&self) -> Vec<Ring> {
        let mut out = Vec::new();
        for a in 0..self.atom_count() {
            out.push(Ring::atom(a));
            for &b in self.descendants(a) {
                out.push(Ring {
                    outer: a,
                    inner: Some(b),
                });
            }
        }
        out
    }

    /// Maximal child-chains from `from` with `|X_n| ≥ ρ|X_0|`.
    pub fn enumerate_chains(&self, from: AtomId, rho: f64) -> Vec<Chain> {
        let floor = rho * self.measure(from);
        let mut out = Vec::new();
        let mut stack = vec![vec![from]];
        while let Some(path) = stack.pop() {
            let last = *path.last().expect("nonempty path");
            let next: Vec<AtomId> = self.nodes[last]
                .children
                .iter()
                .copied()
                .filter(|&c| self.measure(c) >= floor)
                .collect();
            if next.is_empty() {
                out.push(Chain { atoms: path });
            } else {
                for &c in next.iter().rev() {
                    let mut p = path.clone();
                    p.push(c);
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Cumulative-measure midpoints of the leaves in `[0, 1)`, by leaf index.
    pub fn leaf_midpoints(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.leaf_count()];
        let mut acc = 0.0;
        for &li in &self.dfs_leaf {
            let w = self.leaf_weights[li];
            x[li] = acc + 0.5 * w;
            acc += w;
        }
        x
    }

    /// Re-checks all structural invariants.
    pub fn validate(&self) -> ValidationReport {
        let weights_positive = self.leaf_weights.iter().all(|&w| w > 0.0 && w.is_finite());
        let weight_sum_error = (self.leaf_weights.iter().sum::<f64>() - 1.0).abs();
        let mut children_partition = true;
        let mut arity_ok = true;
        let mut binary_order_ok = true;
        let mut max_add: f64 = 0.0;
        for (a, n) in self.nodes.iter().enumerate() {
            if n.children.is_empty() {
                children_partition &= n.end == n.start + 1;
                continue;
            }
            let mut pos = n.start;
            for &c in &n.children {
                children_partition &= self.nodes[c].start == pos;
                pos = self.nodes[c].end;
            }
            children_partition &= pos == n.end;
            let k = n.children.len();
            arity_ok &= match self.mode {
                Mode::Binary => k == 2,
                Mode::Nary(nu) => (2..=nu).contains(&k),
            };
            if self.mode == Mode::Binary {
                if let Some((a1, a2)) = self.primed_children(a) {
                    binary_order_ok &= self.measure(a2) >= self.measure(a1) && self.measure(a1) > 0.0;
                }
            }
            let s: f64 = n.children.iter().map(|&c| self.nodes[c].weight).sum();
            max_add = max_add.max((s - n.weight).abs());
        }
        ValidationReport {
            weights_positive,
            weight_sum_error,
            children_partition,
            arity_ok,
            binary_order_ok,
            max_additivity_error: max_add,
        }
    }

    /// Converts a ring to its external form.
    pub fn ring_spec(&self, r: Ring) -> RingSpec {
        RingSpec {
            outer: self.label(r.outer),
            inner: r.inner.map(|b| self.label(b)),
        }
    }

    pub fn ring_from_spec(&self, s: &RingSpec) -> Result<Ring> {
        let find = |l: u64| {
            self.atom_by_label(l)
                .ok_or_else(|| Error::InvalidTree(format!("unknown atom id {l}")))
        };
        let outer = find(s.outer)?;
        let inner = s.inner.map(find).transpose()?;
        Ring::new(self, outer, inner)
    }

    pub fn family_to_json(&self, family: &[Ring]) -> String {
        let v: Vec<RingSpec> = family.iter().map(|r| self.ring_spec(*r)).collect();
        serde_json::to_string(&v).expect("family serializes")
    }

    pub fn family_from_json(&self, text: &str) -> Result<Vec<Ring>> {
        let v: Vec<RingSpec> = serde_json::from_str(text)?;
        v.iter().map(|s| self.ring_from_spec(s)).collect()
    }

    /// Canonical binary refinement. `groups(a)` lists sets of child
    /// positions of `a` that must become atoms; remaining children are
    /// singleton units. Units are left-folded in order of their first child.
    /// Atom labels of the ν-ary tree are kept; new unions get fresh labels.
    pub fn binarize(&self, groups: impl Fn(AtomId) -> Vec<Vec<usize>>) -> Result<FiltrationTree> {
        let mut next = self.nodes.iter().map(|n| n.label).max().unwrap_or(0) + 1;
        let mut splits = Vec::new();
        for &a in &self.splits {
            let kids = &self.nodes[a].children;
            let gs = groups(a);
            let mut unit_of = vec![usize::MAX; kids.len()];
            for (g, members) in gs.iter().enumerate() {
                for &m in members {
                    if m >= kids.len() || unit_of[m] != usize::MAX {
                        return Err(Error::InvalidTree(format!(
                            "bad merge group for atom {}",
                            self.label(a)
                        )));
                    }
                    unit_of[m] = g;
                }
            }
            // units in order of first child
            let mut units: Vec<Vec<u64>> = Vec::new();
            let mut seen = vec![false; gs.len()];
            for (i, &c) in kids.iter().enumerate() {
                match unit_of[i] {
                    usize::MAX => units.push(vec![self.label(c)]),
                    g if !seen[g] => {
                        seen[g] = true;
                        let mut ms = gs[g].clone();
                        ms.sort_unstable();
                        units.push(ms.iter().map(|&m| self.label(kids[m])).collect());
                    }
                    _ => {}
                }
            }
            let mut unit_labels = Vec::with_capacity(units.len());
            let mut pending = Vec::new();
            for u in units {
                if u.len() == 1 {
                    unit_labels.push(u[0]);
                } else {
                    let l = next;
                    next += 1;
                    unit_labels.push(l);
                    pending.push((l, u));
                }
            }
            if unit_labels.len() == 1 {
                // one group covering every child: the group atom is `a` itself
                let (_, u) = pending.pop().expect("group present");
                left_fold(&u, self.label(a), &mut next, &mut splits);
                continue;
            }
            left_fold(&unit_labels, self.label(a), &mut next, &mut splits);
            for (l, u) in pending {
                left_fold(&u, l, &mut next, &mut splits);
            }
        }
        let mut spec = self.to_spec();
        spec.mode = ModeTag::Binary;
        spec.nu = None;
        spec.splits = splits;
        FiltrationTree::from_spec(&spec)
    }

    /// Collapses every atom in `cut` (an antichain covering Ω) into a leaf.
    /// Returns the coarse tree and, for each coarse atom, its atom here.
    pub fn coarsen(&self, cut: &[AtomId]) -> Result<(FiltrationTree, Vec<AtomId>)> {
        let mut is_cut = vec![false; self.atom_count()];
        for &c in cut {
            is_cut[c] = true;
        }
        let mut spec = FiltrationSpec {
            mode: match self.mode {
                Mode::Binary => ModeTag::Binary,
                Mode::Nary(_) => ModeTag::Nary,
            },
            nu: match self.mode {
                Mode::Binary => None,
                Mode::Nary(nu) => Some(nu),
            },
            leaves: Vec::with_capacity(cut.len()),
            splits: Vec::new(),
            attrs: Default::default(),
        };
        let mut covered = 0usize;
        for &a in &self.preorder {
            if is_cut[a] {
                spec.leaves.push(LeafSpec {
                    id: self.label(a),
                    w: self.measure(a),
                });
                covered += self.atom_size(a);
            }
        }
        if covered != self.leaf_count() {
            return Err(Error::InvalidTree("coarsening cut is not a partition".into()));
        }
        // weights summed by atoms may drift from 1 in the last bits
        let total: f64 = spec.leaves.iter().map(|l| l.w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::WeightSum { sum: total });
        }
        for &a in &self.splits {
            let inside_cut = {
                let mut x = Some(a);
                let mut hit = false;
                while let Some(y) = x {
                    if is_cut[y] {
                        hit = true;
                        break;
                    }
                    x = self.parent(y);
                }
                hit
            };
            if !inside_cut {
                spec.splits.push(SplitSpec {
                    parent: self.label(a),
                    children: self.children(a).iter().map(|&c| self.label(c)).collect(),
                });
            }
        }
        let coarse = FiltrationTree::from_spec(&spec)?;
        let map = (0..coarse.atom_count())
            .map(|c| self.atom_by_label(coarse.label(c)).expect("label present"))
            .collect();
        Ok((coarse, map))
    }
}

/// Emits splits turning `top` into the left fold of `labels`.
fn left_fold(labels: &[u64], top: u64, next: &mut u64, splits: &mut Vec<SplitSpec>) {
    let mut cur = top;
    let mut k = labels.len();
    while k > 1 {
        let left = if k == 2 {
            labels[0]
        } else {
            *next += 1;
            *next - 1
        };
        splits.push(SplitSpec {
            parent: cur,
            children: vec![left, labels[k - 1]],
        });
        cur = left;
        k -= 1;
    }
}

#[cfg(test)]
mod tests;

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringvar::filtration::build_random_tree;
use ringvar::{AtomId, FiltrationTree, LeafFunction, Ring};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_fn(n: usize, rng: &mut ChaCha8Rng) -> LeafFunction {
    LeafFunction::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub fn tree(splits: usize, nu: usize, seed: u64) -> FiltrationTree {
    build_random_tree(splits, nu, seed).unwrap()
}

/// Leaves below `a`, found by walking children.
pub fn leaves_below(t: &FiltrationTree, a: AtomId) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![a];
    while let Some(x) = stack.pop() {
        match t.leaf_of(x) {
            Some(l) => out.push(l),
            None => stack.extend_from_slice(t.children(x)),
        }
    }
    out.sort_unstable();
    out
}

/// Whether `b` lies strictly below `a`, by walking parents.
pub fn strictly_below(t: &FiltrationTree, a: AtomId, b: AtomId) -> bool {
    let mut x = t.parent(b);
    while let Some(y) = x {
        if y == a {
            return true;
        }
        x = t.parent(y);
    }
    false
}

pub fn ring_leafset(t: &FiltrationTree, r: Ring) -> Vec<usize> {
    let hole = r.inner.map(|b| leaves_below(t, b)).unwrap_or_default();
    leaves_below(t, r.outer)
        .into_iter()
        .filter(|l| !hole.contains(l))
        .collect()
}

pub fn random_ring(t: &FiltrationTree, rng: &mut ChaCha8Rng) -> Ring {
    let a = rng.gen_range(0..t.atom_count());
    let below: Vec<AtomId> = (0..t.atom_count()).filter(|&b| strictly_below(t, a, b)).collect();
    if below.is_empty() || rng.gen_bool(0.4) {
        Ring::atom(a)
    } else {
        Ring {
            outer: a,
            inner: Some(below[rng.gen_range(0..below.len())]),
        }
    }
}

/// Disjoint family built by rejection sampling.
pub fn random_family(t: &FiltrationTree, rng: &mut ChaCha8Rng, tries: usize) -> Vec<Ring> {
    let mut fam: Vec<Ring> = Vec::new();
    let mut used = vec![false; t.leaf_count()];
    for _ in 0..tries {
        let r = random_ring(t, rng);
        let ls = ring_leafset(t, r);
        if ls.iter().all(|&l| !used[l]) {
            for l in ls {
                used[l] = true;
            }
            fam.push(r);
        }
    }
    fam
}

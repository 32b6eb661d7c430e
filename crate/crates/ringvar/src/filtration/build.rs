//! Standard tree generators.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_capacity, AtomId, FiltrationSpec, FiltrationTree, LeafSpec, Mode, ModeTag};
use super::{AtomAttrs, SplitSpec};
use crate::error::{param, Error, Result};

/// Incremental construction of a tree by subdividing atoms.
///
/// Atoms get internal indices in creation order, which matches the atom
/// indices of the finished tree. Leaves are labelled `0..L` left to right,
/// interior atoms `L..` in creation order.
#[derive(Clone, Debug)]
pub struct TreeBuilder {
    mode: Mode,
    kids: Vec<Vec<usize>>,
    weight: Vec<f64>,
    order: Vec<usize>,
    diag: Vec<Option<f64>>,
}

impl TreeBuilder {
    pub fn new(mode: Mode) -> Self {
        TreeBuilder {
            mode,
            kids: vec![Vec::new()],
            weight: vec![1.0],
            order: Vec::new(),
            diag: vec![None],
        }
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.weight[a]
    }

    pub fn atom_count(&self) -> usize {
        self.kids.len()
    }

    /// Subdivides `a` into children with the given absolute weights.
    pub fn split(&mut self, a: usize, weights: &[f64]) -> Vec<usize> {
        assert!(self.kids[a].is_empty(), "atom {a} already split");
        let first = self.kids.len();
        for &w in weights {
            self.kids.push(Vec::new());
            self.weight.push(w);
            self.diag.push(None);
        }
        let ids: Vec<usize> = (first..first + weights.len()).collect();
        self.kids[a] = ids.clone();
        self.order.push(a);
        ids
    }

    /// Subdivides `a` into `k` children of equal weight.
    pub fn split_even(&mut self, a: usize, k: usize) -> Vec<usize> {
        let w = self.weight[a] / k as f64;
        self.split(a, &vec![w; k])
    }

    pub fn set_diag(&mut self, a: usize, d: f64) {
        self.diag[a] = Some(d);
    }

    pub fn spec(&self) -> FiltrationSpec {
        let n = self.kids.len();
        let mut label = vec![u64::MAX; n];
        let mut leaves = Vec::new();
        let mut stack = vec![0usize];
        while let Some(a) = stack.pop() {
            if self.kids[a].is_empty() {
                label[a] = leaves.len() as u64;
                leaves.push(LeafSpec {
                    id: label[a],
                    w: self.weight[a],
                });
            } else {
                stack.extend(self.kids[a].iter().rev());
            }
        }
        let mut next = leaves.len() as u64;
        for a in 0..n {
            if !self.kids[a].is_empty() {
                label[a] = next;
                next += 1;
            }
        }
        let (mode, nu) = match self.mode {
            Mode::Binary => (ModeTag::Binary, None),
            Mode::Nary(nu) => (ModeTag::Nary, Some(nu)),
        };
        FiltrationSpec {
            mode,
            nu,
            leaves,
            splits: self
                .order
                .iter()
                .map(|&a| SplitSpec {
                    parent: label[a],
                    children: self.kids[a].iter().map(|&c| label[c]).collect(),
                })
                .collect(),
            attrs: (0..n)
                .filter_map(|a| self.diag[a].map(|d| (label[a], AtomAttrs { diag: d })))
                .collect(),
        }
    }

    pub fn finish(&self) -> Result<FiltrationTree> {
        let leaves = self.kids.iter().filter(|k| k.is_empty()).count();
        check_capacity("leaves", leaves)?;
        FiltrationTree::from_spec(&self.spec())
    }
}

/// Uniform dyadic tree on `2^depth` leaves with breadth-first split order.
pub fn build_dyadic_interval(depth: usize) -> Result<FiltrationTree> {
    if depth > 24 {
        return Err(Error::Capacity {
            what: "dyadic depth",
            requested: depth,
            limit: 24,
        });
    }
    check_capacity("leaves", 1usize << depth)?;
    let mut b = TreeBuilder::new(Mode::Binary);
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    while let Some((a, d)) = queue.pop_front() {
        if d < depth {
            for c in b.split_even(a, 2) {
                queue.push_back((c, d + 1));
            }
        }
    }
    b.finish()
}

/// Rectangle grid of the unit square and its binary refinement.
#[derive(Clone, Debug)]
pub struct TensorTrees {
    pub n1: usize,
    pub n2: usize,
    pub depth: usize,
    /// ν-ary tree of rectangles, ν = n1·n2.
    pub coarse: FiltrationTree,
    /// Binary refinement on the same leaves.
    pub fine: FiltrationTree,
    /// `(level, column, row)` of each coarse atom.
    pub cells: Vec<(usize, u64, u64)>,
}

impl TensorTrees {
    /// Coarse atom at grid position `(level, column, row)`.
    pub fn cell(&self, level: usize, col: u64, row: u64) -> Option<AtomId> {
        self.cells
            .iter()
            .position(|&c| c == (level, col, row))
    }
}

/// `n1 × n2` subdivision of the square, `depth` levels deep.
///
/// Children of a rectangle are listed column-major: `(a, b)` for
/// `a in 0..n1`, `b in 0..n2`. In the binary refinement, for every
/// rectangle in the rightmost column of its level the two lowest cells of
/// its leftmost child column are merged into one atom first.
pub fn build_tensor_square(n1: usize, n2: usize, depth: usize) -> Result<TensorTrees> {
    if n1 < 2 || n2 < 2 {
        return Err(param(format!("tensor square needs n1, n2 >= 2, got {n1}, {n2}")));
    }
    let nu = n1 * n2;
    let leaves = (nu as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    check_capacity("leaves", usize::try_from(leaves).unwrap_or(usize::MAX))?;
    let mut b = TreeBuilder::new(Mode::Nary(nu));
    let mut cells = vec![(0usize, 0u64, 0u64)];
    let mut queue = VecDeque::from([0usize]);
    while let Some(a) = queue.pop_front() {
        let (lev, col, row) = cells[a];
        if lev == depth {
            continue;
        }
        let kids = b.split_even(a, nu);
        for (i, &c) in kids.iter().enumerate() {
            let (da, db) = ((i / n2) as u64, (i % n2) as u64);
            cells.push((lev + 1, col * n1 as u64 + da, row * n2 as u64 + db));
            debug_assert_eq!(cells.len(), c + 1);
            queue.push_back(c);
        }
    }
    let coarse = b.finish()?;
    let fine = coarse.binarize(|a| {
        let (lev, col, _) = cells[a];
        if col + 1 == (n1 as u64).pow(lev as u32) {
            vec![vec![0, 1]]
        } else {
            Vec::new()
        }
    })?;
    Ok(TensorTrees {
        n1,
        n2,
        depth,
        coarse,
        fine,
        cells,
    })
}

/// Word tree of the fractal comparison example.
#[derive(Clone, Debug)]
pub struct FractalTrees {
    pub n: usize,
    pub nu: usize,
    pub depth: usize,
    /// ν-ary tree; every atom carries its diagonal mass.
    pub nary: FiltrationTree,
    /// Binary refinement in which letters `n+1`, `n+2` are merged first.
    pub binary: FiltrationTree,
    /// Word (letters `1..=ν`) of each ν-ary atom.
    pub words: Vec<Vec<u8>>,
}

impl FractalTrees {
    /// Whether every letter of the atom's word lies in `1..=n`.
    pub fn is_diagonal(&self, a: AtomId) -> bool {
        self.words[a].iter().all(|&l| (l as usize) <= self.n)
    }
}

pub fn build_fractal_tree(n: usize, nu: usize, depth: usize) -> Result<FractalTrees> {
    if n < 2 || nu < n + 2 || nu > n * n {
        return Err(param(format!(
            "fractal tree needs n >= 2 and n+2 <= nu <= n^2, got n={n}, nu={nu}"
        )));
    }
    if nu > u8::MAX as usize {
        return Err(param("nu too large"));
    }
    let leaves = (nu as u128).checked_pow(depth as u32).unwrap_or(u128::MAX);
    check_capacity("leaves", usize::try_from(leaves).unwrap_or(usize::MAX))?;
    let mut b = TreeBuilder::new(Mode::Nary(nu));
    let mut words: Vec<Vec<u8>> = vec![Vec::new()];
    b.set_diag(0, 1.0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(a) = queue.pop_front() {
        if words[a].len() == depth {
            continue;
        }
        let kids = b.split_even(a, nu);
        for (i, &c) in kids.iter().enumerate() {
            let mut w = words[a].clone();
            w.push(i as u8 + 1);
            let diag = if w.iter().all(|&l| (l as usize) <= n) {
                (n as f64).powi(-(w.len() as i32))
            } else {
                0.0
            };
            b.set_diag(c, diag);
            words.push(w);
            queue.push_back(c);
        }
    }
    let nary = b.finish()?;
    let binary = nary.binarize(|_| vec![vec![n, n + 1]])?;
    Ok(FractalTrees {
        n,
        nu,
        depth,
        nary,
        binary,
        words,
    })
}

/// Random tree with `splits` subdivisions of uniformly chosen leaves into
/// `2..=nu` children of random weights. `nu = 2` gives a binary tree.
pub fn build_random_tree(splits: usize, nu: usize, seed: u64) -> Result<FiltrationTree> {
    if nu < 2 {
        return Err(param(format!("nu must be at least 2, got {nu}")));
    }
    check_capacity("leaves", 1 + splits * (nu - 1))?;
    let mode = if nu == 2 { Mode::Binary } else { Mode::Nary(nu) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = TreeBuilder::new(mode);
    let mut leaves = vec![0usize];
    for _ in 0..splits {
        let a = leaves.swap_remove(rng.gen_range(0..leaves.len()));
        let k = rng.gen_range(2..=nu);
        let u: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = u.iter().sum();
        let w = b.weight(a);
        let ws: Vec<f64> = u.iter().map(|x| w * x / total).collect();
        leaves.extend(b.split(a, &ws));
    }
    b.finish()
}

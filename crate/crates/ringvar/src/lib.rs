//! Ring-variation seminorms and greedy approximation on finite filtrations.
//!
//! A probability space is a finite set of weighted leaves organised by a
//! rooted tree of atoms. On top of it the crate evaluates best local `L^p`
//! approximation from a finite-dimensional space `S`, the variation
//! seminorm `|f|_{V_{σ,p}}` (exactly, by dynamic programming over rings),
//! the associated modulus and K-functional bounds, local orthonormal
//! systems, greedy approximants, and generators for the classical
//! counterexamples.

pub mod error;
pub mod experiments;
pub mod filtration;
pub mod geometry;
pub mod greedy;
pub mod linalg;
pub mod local_basis;
pub mod lp_approx;
pub mod splitting;
pub mod variation;

pub use error::{Error, Result};
pub use filtration::{AtomId, Chain, FiltrationTree, Mode, Ring};
pub use local_basis::{LeafFunction, LocalSpace, LocalSystem};
pub use lp_approx::{best_lp, BestApprox, NearBestParams};

//! Bilevel optimization with non-convex, constrained lower levels via a
//! discretized, regularized value function.
//!
//! The lower-level feasible set is replaced by a finite covering
//! `y(1), ..., y(k)`, lower-level optimality becomes a penalty on the gap
//! between the weighted lower objective and a smooth surrogate of the value
//! function, and the resulting single-level problem over `(x, p)` with `p` on
//! the unit simplex is solved by projected gradient descent.
//!
//! Modules:
//! - [`problem`]: problem instances, box sets, smoothness constants
//! - [`geometry`]: simplex and product-set projections
//! - [`covering`]: discretization of the lower-level set
//! - [`value_function`]: the regularized discretized value function and the
//!   brute-force value function oracle
//! - [`solver`]: the DIVIDE-BLO iteration and its certificates
//! - [`baselines`]: TTSA and V-PBGD reference methods
//! - [`bench`]: config, metrics oracles, sweeps, reports and CSV I/O

// NaN-rejecting checks are written as `!(v > 0.0)` on purpose, and the dense
// linear algebra reads better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod covering;
mod error;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod value_function;

pub use error::{Error, Result};

//! Stochastic sequential quadratic programming for convex problems with
//! smooth functional constraints.
//!
//! The crate solves
//!
//! ```text
//!     minimize    f(x) + h(x)          f(x) = E[f_i(x)]  or  (1/n) sum_i f_i(x)
//!     subject to  g_k(x) <= 0,  k = 1..m
//! ```
//!
//! through the exact penalty `F(x) = f(x) + h(x) + gamma * max{0, g_1(x), .., g_m(x)}`
//! and a family of prox-linear methods, each of which linearizes `f` and the
//! `g_k` and solves one small quadratic program per step:
//!
//! - [`algorithms::ssqp`]: one QP per stochastic gradient.
//! - [`algorithms::skip`]: a control-variate variant that solves the QP only
//!   with a decaying probability.
//! - [`algorithms::varas`]: an accelerated, variance-reduced method for
//!   finite sums.
//!
//! Every QP is reduced to the [`qp::CanonicalQp`] form (diagonal quadratic,
//! separable regularizer, weighted max-of-affine hinge) and solved by
//! [`qp::solve_canonical_qp`].
//!
//! The crate is `no_std` (with `alloc`). Enable the `std` feature for
//! `std::error::Error` integration and `serde` for serializable configs.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![deny(unsafe_code)]
// NaN-rejecting comparisons and index loops over several parallel slices
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod algorithms;
pub mod baselines;
mod error;
pub mod linalg;
pub mod math;
pub mod penalty;
pub mod problem;
pub mod problems;
pub mod qp;
pub mod rng;
pub mod schedules;

pub use error::{Error, Result};
pub use problem::{ConstrainedProblem, OracleCounters, ProblemConstants, Regularizer, SfoSample};

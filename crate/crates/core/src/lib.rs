//! Accelerated dual proximal gradient solver for dense convex QPs.
//!
//! The solver works on the dual of
//!
//! ```text
//! min 1/2 xi^T H xi + G^T xi   s.t.   A xi <= B
//! ```
//!
//! and extrapolates with weights taken from order-`alpha` momentum tables
//! ([`param_table`]). `alpha = 2` reproduces FISTA; larger orders tighten the
//! worst-case rate to `O(1 / p^alpha)`.
//!
//! Around the solver sit an MPC condenser ([`mpc_condense`]), a random instance
//! generator ([`randgen`]), an exact active-set reference ([`oracle`]), the
//! Cholesky change of variables ([`precondition`]) and the benchmark harness
//! ([`bench_stats`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench_stats;
pub mod dual_pgm;
pub mod error;
pub mod mpc_condense;
pub mod oracle;
pub mod param_table;
pub mod precondition;
pub mod randgen;

pub use dual_pgm::{solve, QpProblem, SolveResult, SolverOptions, StopReason};
pub use error::{Error, Result};
pub use param_table::LookupTable;

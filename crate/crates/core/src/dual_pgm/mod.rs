//! Dual accelerated proximal gradient solver for dense convex QPs.

mod bounds;
mod problem;
mod solver;

pub use bounds::{check_bounds, theoretical_dual_gap_bound, theoretical_primal_bound, BoundViolations};
pub use problem::{dual_gradient, dual_objective, lipschitz_constant, primal_from_dual, QpProblem, QpProblemFile};
pub use solver::{
    project_nonneg, solve, HistoryFile, SolveHistory, SolveResult, SolveResultFile, SolverOptions, StopReason,
};

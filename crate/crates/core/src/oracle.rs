//! Exact reference solutions for small QPs by active-set enumeration.
//!
//! Every candidate set of tight rows is solved as an equality-constrained KKT
//! system. The survivor with feasible primal, non-negative multipliers and the
//! lowest objective is the unique optimum of the strictly convex problem.

use nalgebra::{DMatrix, DVector};

use crate::dual_pgm::{solve, QpProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::param_table::LookupTable;

/// Largest constraint count accepted by [`active_set_solve`].
pub const MAX_ENUMERATION_ROWS: usize = 24;
/// Problems up to this many rows get an exact reference in [`reference_solution`].
pub const EXACT_REFERENCE_ROWS: usize = 14;

const FEAS_TOL: f64 = 1e-9;
const SIGN_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub xi: DVector<f64>,
    pub mu: DVector<f64>,
    /// Tight rows, ascending.
    pub active_set: Vec<usize>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    /// `||H xi + G + A^T mu||_inf`
    pub stationarity: f64,
    /// `max(0, max_l (A_l xi - B_l))`
    pub feasibility: f64,
    /// `max_l |mu_l (A_l xi - B_l)|`
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

pub fn kkt_residual(problem: &QpProblem, xi: &DVector<f64>, mu: &DVector<f64>) -> Result<KktResidual> {
    if xi.len() != problem.n_v() {
        return Err(Error::DimensionMismatch { what: "xi", expected: problem.n_v(), got: xi.len() });
    }
    if mu.len() != problem.n_c() {
        return Err(Error::DimensionMismatch { what: "mu", expected: problem.n_c(), got: mu.len() });
    }
    let stat = problem.h() * xi + problem.g() + problem.a().transpose() * mu;
    let slack = problem.a() * xi - problem.b();
    Ok(KktResidual {
        stationarity: stat.amax(),
        feasibility: slack.iter().fold(0.0f64, |acc, &s| acc.max(s)),
        complementarity: slack.iter().zip(mu.iter()).fold(0.0f64, |acc, (s, m)| acc.max((s * m).abs())),
    })
}

struct Search<'a> {
    problem: &'a QpProblem,
    best: Option<KktSolution>,
}

impl Search<'_> {
    /// Solves `[H A_S^T; A_S 0] [xi; mu_S] = [-G; B_S]`; `None` when `A_S` is rank deficient.
    fn candidate(&self, active: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
        let p = self.problem;
        let n = p.n_v();
        let k = active.len();
        let a_s = DMatrix::from_fn(k, n, |i, j| p.a()[(active[i], j)]);
        if k > 0 {
            if k > n {
                return None;
            }
            let sv = a_s.singular_values();
            let top = sv.max();
            if top == 0.0 || sv.min() <= RANK_TOL * top {
                return None;
            }
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(p.h());
        kkt.view_mut((0, n), (n, k)).copy_from(&a_s.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(&a_s);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-p.g()));
        for (i, &row) in active.iter().enumerate() {
            rhs[n + i] = p.b()[row];
        }
        let sol = kkt.full_piv_lu().solve(&rhs)?;
        Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
    }

    fn visit(&mut self, active: &mut Vec<usize>) {
        let Some((xi, mu_s)) = self.candidate(active) else {
            // supersets of a rank-deficient set are rank deficient too
            return;
        };
        let p = self.problem;
        let feasible = (p.a() * &xi - p.b())
            .iter()
            .zip(p.b().iter())
            .all(|(s, b)| *s <= FEAS_TOL * (1.0 + b.abs()));
        let dual_ok = mu_s.iter().all(|&m| m >= -SIGN_TOL);
        if feasible && dual_ok {
            let objective = p.primal_objective(&xi);
            let better = match &self.best {
                None => true,
                Some(b) => objective < b.objective - 1e-12 * (1.0 + b.objective.abs()),
            };
            if better {
                let mut mu = DVector::zeros(p.n_c());
                for (i, &row) in active.iter().enumerate() {
                    mu[row] = mu_s[i].max(0.0);
                }
                self.best = Some(KktSolution { xi, mu, active_set: active.clone(), objective });
            }
        }
        let start = active.last().map_or(0, |&l| l + 1);
        for next in start..p.n_c() {
            active.push(next);
            self.visit(active);
            active.pop();
        }
    }
}

/// Enumerates active sets in lexicographic order; ties in objective keep the
/// first set found.
pub fn active_set_solve(problem: &QpProblem) -> Result<KktSolution> {
    if problem.n_c() > MAX_ENUMERATION_ROWS {
        return Err(Error::BudgetExceeded { n_c: problem.n_c(), limit: MAX_ENUMERATION_ROWS });
    }
    let mut search = Search { problem, best: None };
    search.visit(&mut Vec::new());
    search.best.ok_or(Error::Infeasible)
}

/// Ground truth used by tests and the benchmark.
#[derive(Debug, Clone)]
pub struct Reference {
    pub xi: DVector<f64>,
    pub mu: DVector<f64>,
    /// `true` for active-set enumeration, `false` for a tight-tolerance solve.
    pub exact: bool,
}

/// Exact oracle for up to 14 rows, otherwise the `alpha = 2` solver run at
/// `stop_tol = 1e-10`.
pub fn reference_solution(problem: &QpProblem) -> Result<Reference> {
    if problem.n_c() <= EXACT_REFERENCE_ROWS {
        let k = active_set_solve(problem)?;
        return Ok(Reference { xi: k.xi, mu: k.mu, exact: true });
    }
    let table = LookupTable::build(2, 4096)?;
    let opts = SolverOptions { stop_tol: 1e-10, ..SolverOptions::with_alpha(2) };
    let r = solve(problem, &table, &opts)?;
    Ok(Reference { xi: r.xi_star, mu: r.mu_star, exact: false })
}

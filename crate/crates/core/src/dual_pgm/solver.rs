use std::borrow::Cow;
use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::problem::{primal_from_dual, QpProblem};
use crate::error::{Error, Result};
use crate::param_table::LookupTable;

/// Componentwise `max(0, v)`. Negative zero maps to `+0.0`; NaN is kept so the
/// divergence guard can see it.
pub fn project_nonneg(v: &DVector<f64>) -> DVector<f64> {
    v.map(clamp_nonneg)
}

#[inline]
fn clamp_nonneg(x: f64) -> f64 {
    if x > 0.0 || x.is_nan() {
        x
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub alpha: u32,
    /// Stop once `||xi^p - xi^{p-1}||_2 <= stop_tol`.
    pub stop_tol: f64,
    pub max_iters: usize,
    pub record_history: bool,
    /// Initial multipliers; `None` means the zero vector.
    pub mu0: Option<DVector<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            alpha: 2,
            stop_tol: 1e-3,
            max_iters: 100_000,
            record_history: false,
            mu0: None,
        }
    }
}

impl SolverOptions {
    pub fn with_alpha(alpha: u32) -> Self {
        SolverOptions {
            alpha,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    IterationCap,
    DivergenceGuard,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::IterationCap => "iteration-cap",
            StopReason::DivergenceGuard => "divergence-guard",
        })
    }
}

/// Per-iteration record; entry `p - 1` belongs to iteration `p`.
#[derive(Debug, Clone, Default)]
pub struct SolveHistory {
    pub primal: Vec<DVector<f64>>,
    pub dual: Vec<DVector<f64>>,
    pub dual_objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub xi_star: DVector<f64>,
    pub mu_star: DVector<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub history: Option<SolveHistory>,
    pub elapsed_s: f64,
    pub diagnostics: Option<String>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }
}

/// Accelerated projected gradient on the dual, recovering the primal iterate
/// after every projection.
///
/// Iteration `p` computes
///
/// ```text
/// mu^p      = max(0, zeta^p + (A xibar^p - B) / L)
/// xi^p      = H^{-1}(-A^T mu^p - G)
/// zeta^p+1  = mu^p + beta_p (mu^p - mu^{p-1})
/// xibar^p+1 = xi^p + beta_p (xi^p - xi^{p-1})
/// ```
///
/// with `beta_p = (tau_p - 1) / tau_{p+1}` read from the table, starting from
/// `zeta^1 = mu^0` and `xibar^1 = xi^0 = H^{-1}(-A^T mu^0 - G)`. The table is
/// extended on a private copy if the iteration outruns it.
pub fn solve(problem: &QpProblem, table: &LookupTable, opts: &SolverOptions) -> Result<SolveResult> {
    if table.alpha() != opts.alpha {
        return Err(Error::AlphaMismatch {
            table: table.alpha(),
            options: opts.alpha,
        });
    }
    if !(opts.stop_tol > 0.0) {
        return Err(Error::domain("stop_tol must be positive"));
    }
    if opts.max_iters < 1 {
        return Err(Error::domain("max_iters must be >= 1"));
    }
    let n_c = problem.n_c();
    let mu0 = match &opts.mu0 {
        Some(mu0) => {
            problem.check_len("mu0", mu0, n_c)?;
            if mu0.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::domain("mu0 must be componentwise non-negative"));
            }
            mu0.clone()
        }
        None => DVector::zeros(n_c),
    };
    let lipschitz = problem.lipschitz();
    if !(lipschitz > 0.0) {
        return Err(Error::DegenerateLipschitz);
    }

    let start = Instant::now();
    let inv_l = 1.0 / lipschitz;
    let a = problem.a();
    let b = problem.b();
    let g = problem.g();
    let mut table = Cow::Borrowed(table);

    let mut mu_prev = mu0.clone();
    let mut xi_prev = primal_from_dual(problem, &mu0)?;
    let mut zeta = mu0;
    let mut xi_bar = xi_prev.clone();
    let mut mu = DVector::zeros(n_c);
    let mut xi = DVector::zeros(problem.n_v());
    let mut history = opts.record_history.then(SolveHistory::default);

    let mut stop_reason = StopReason::IterationCap;
    let mut diagnostics = None;
    let mut iterations = opts.max_iters;

    for p in 1..=opts.max_iters {
        // mu^p = max(0, zeta^p + (A xibar^p - B) / L)
        mu.copy_from(b);
        mu.gemv(1.0, a, &xi_bar, -1.0);
        mu.axpy(1.0, &zeta, inv_l);
        mu.apply(|x| *x = clamp_nonneg(*x));

        if table.len() < p + 1 {
            let target = (2 * table.len()).max(p + 1);
            table.to_mut().extend_to(target)?;
        }
        let beta = table.momentum_coeff(p)?;

        // xi^p = -H^{-1}(A^T mu^p + G)
        xi.copy_from(g);
        xi.gemv_tr(1.0, a, &mu, 1.0);
        problem.apply_h_inverse(&mut xi);
        xi.neg_mut();

        if !xi.iter().chain(mu.iter()).all(|x| x.is_finite()) {
            stop_reason = StopReason::DivergenceGuard;
            diagnostics = Some(format!("non-finite iterate at iteration {p}"));
            iterations = p;
            break;
        }
        if let Some(h) = history.as_mut() {
            // f(mu) = -1/2 (A^T mu + G)^T xi + B^T mu
            let mut w = g.clone();
            w.gemv_tr(1.0, a, &mu, 1.0);
            h.dual_objective.push(-0.5 * w.dot(&xi) + b.dot(&mu));
            h.primal.push(xi.clone());
            h.dual.push(mu.clone());
        }

        let step = (&xi - &xi_prev).norm();
        if step <= opts.stop_tol {
            stop_reason = StopReason::Converged;
            iterations = p;
            break;
        }

        // zeta^{p+1} = mu^p + beta (mu^p - mu^{p-1}); same for xibar
        zeta.copy_from(&mu);
        zeta.axpy(-beta, &mu_prev, 1.0 + beta);
        xi_bar.copy_from(&xi);
        xi_bar.axpy(-beta, &xi_prev, 1.0 + beta);
        std::mem::swap(&mut mu_prev, &mut mu);
        std::mem::swap(&mut xi_prev, &mut xi);
    }

    // after a cap stop the latest iterate sits in the `_prev` buffers
    let (xi_star, mu_star) = if stop_reason == StopReason::IterationCap {
        (xi_prev, mu_prev)
    } else {
        (xi, mu)
    };

    Ok(SolveResult {
        xi_star,
        mu_star,
        iterations,
        stop_reason,
        history,
        elapsed_s: start.elapsed().as_secs_f64(),
        diagnostics,
    })
}

/// JSON export of a [`SolveResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResultFile {
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub elapsed_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<HistoryFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryFile {
    pub primal: Vec<Vec<f64>>,
    pub dual_objective: Vec<f64>,
}

impl From<&SolveResult> for SolveResultFile {
    fn from(r: &SolveResult) -> Self {
        SolveResultFile {
            xi: r.xi_star.iter().copied().collect(),
            mu: r.mu_star.iter().copied().collect(),
            iterations: r.iterations,
            stop_reason: r.stop_reason,
            elapsed_s: r.elapsed_s,
            history: r.history.as_ref().map(|h| HistoryFile {
                primal: h.primal.iter().map(|x| x.iter().copied().collect()).collect(),
                dual_objective: h.dual_objective.clone(),
            }),
        }
    }
}

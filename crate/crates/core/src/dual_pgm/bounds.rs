//! Worst-case convergence bounds and per-iteration checks against them.

use nalgebra::DVector;

use super::problem::QpProblem;
use super::solver::SolveHistory;
use crate::error::{Error, Result};

fn check_common(alpha: u32, lipschitz: f64, dist0: f64, p: usize) -> Result<()> {
    if alpha < 2 {
        return Err(Error::domain(format!("alpha must be >= 2, got {alpha}")));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::domain("L must be positive"));
    }
    // dist0 = 0 happens when the start point is already optimal
    if !(dist0 >= 0.0) {
        return Err(Error::domain("dist0 must be non-negative"));
    }
    if p < 1 {
        return Err(Error::domain("p must be >= 1"));
    }
    Ok(())
}

/// `(alpha / (p + alpha - 1))^alpha`, written so it never overflows.
fn rate(alpha: u32, p: usize) -> f64 {
    let a = f64::from(alpha);
    (a / (p as f64 + a - 1.0)).powi(alpha as i32)
}

/// `alpha^alpha L dist0 / (sigma_min (p + alpha - 1)^alpha)`, bounding `||xi^p - xi*||^2`.
pub fn theoretical_primal_bound(alpha: u32, lipschitz: f64, dist0: f64, sigma_min: f64, p: usize) -> Result<f64> {
    check_common(alpha, lipschitz, dist0, p)?;
    if !(sigma_min > 0.0) {
        return Err(Error::domain("sigma_min must be positive"));
    }
    Ok(rate(alpha, p) * lipschitz * dist0 / sigma_min)
}

/// `alpha^alpha L dist0 / (2 (p + alpha - 1)^alpha)`, bounding `f(mu^p) - f(mu*)`.
pub fn theoretical_dual_gap_bound(alpha: u32, lipschitz: f64, dist0: f64, p: usize) -> Result<f64> {
    check_common(alpha, lipschitz, dist0, p)?;
    Ok(0.5 * rate(alpha, p) * lipschitz * dist0)
}

/// Violation counts of both bounds over a recorded history.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundViolations {
    pub checked: usize,
    pub dual_gap: usize,
    pub primal: usize,
}

impl BoundViolations {
    pub fn any(&self) -> bool {
        self.dual_gap > 0 || self.primal > 0
    }
}

/// Checks every recorded iteration against both bounds.
///
/// `dual_opt` is `f(mu*)`. A small absolute slack scaled by the magnitude of the
/// compared quantities absorbs floating-point rounding in the gap.
pub fn check_bounds(
    problem: &QpProblem,
    history: &SolveHistory,
    alpha: u32,
    mu0: &DVector<f64>,
    mu_star: &DVector<f64>,
    xi_star: &DVector<f64>,
    dual_opt: f64,
) -> Result<BoundViolations> {
    let lipschitz = problem.lipschitz();
    let sigma = problem.sigma_min();
    let dist0 = (mu0 - mu_star).norm_squared();
    let dual_slack = 1e-9 * (1.0 + dual_opt.abs());
    let primal_slack = 1e-9 * (1.0 + xi_star.norm_squared());
    let mut out = BoundViolations::default();
    for (i, (xi, f)) in history.primal.iter().zip(&history.dual_objective).enumerate() {
        let p = i + 1;
        out.checked += 1;
        if f - dual_opt > theoretical_dual_gap_bound(alpha, lipschitz, dist0, p)? + dual_slack {
            out.dual_gap += 1;
        }
        if (xi - xi_star).norm_squared() > theoretical_primal_bound(alpha, lipschitz, dist0, sigma, p)? + primal_slack {
            out.primal += 1;
        }
    }
    Ok(out)
}

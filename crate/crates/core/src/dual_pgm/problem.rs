use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precondition::{cholesky, CholeskyFactor};

const SYMMETRY_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 10_000;

/// Dense convex QP `min 1/2 xi^T H xi + G^T xi  s.t.  A xi <= B`.
///
/// Construction validates the data, factors `H` once and caches the dual
/// Lipschitz constant `L = lambda_max(A H^{-1} A^T)` together with the smallest
/// eigenvalue of `H`. The value is immutable afterwards and can be shared across
/// threads.
#[derive(Debug, Clone)]
pub struct QpProblem {
    h: DMatrix<f64>,
    g: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    factor: CholeskyFactor,
    identity_curvature: bool,
    lipschitz: f64,
    sigma_min: f64,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n_v = g.len();
        let n_c = b.len();
        if h.nrows() != n_v {
            return Err(Error::DimensionMismatch { what: "H rows", expected: n_v, got: h.nrows() });
        }
        if h.ncols() != n_v {
            return Err(Error::DimensionMismatch { what: "H columns", expected: n_v, got: h.ncols() });
        }
        if a.nrows() != n_c {
            return Err(Error::DimensionMismatch { what: "A rows", expected: n_c, got: a.nrows() });
        }
        if a.ncols() != n_v {
            return Err(Error::DimensionMismatch { what: "A columns", expected: n_v, got: a.ncols() });
        }
        if n_v == 0 {
            return Err(Error::domain("problem has no decision variables"));
        }
        for (name, finite) in [
            ("H", h.iter().all(|x| x.is_finite())),
            ("G", g.iter().all(|x| x.is_finite())),
            ("A", a.iter().all(|x| x.is_finite())),
            ("B", b.iter().all(|x| x.is_finite())),
        ] {
            if !finite {
                return Err(Error::schema(name, "contains a non-finite entry"));
            }
        }

        let scale = h.amax().max(f64::MIN_POSITIVE);
        let asym = (&h - h.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { what: "H", asymmetry: asym });
        }

        let factor = cholesky(&h)?;
        let identity_curvature = h == DMatrix::identity(n_v, n_v);
        let lipschitz = dual_lipschitz(&factor, &a);
        let sigma_min = min_eigenvalue(&factor);
        Ok(QpProblem { h, g, a, b, factor, identity_curvature, lipschitz, sigma_min })
    }

    pub fn n_v(&self) -> usize {
        self.g.len()
    }

    pub fn n_c(&self) -> usize {
        self.b.len()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// `lambda_max(A H^{-1} A^T)`; zero when `A` vanishes.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Smallest eigenvalue of `H`.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn has_identity_curvature(&self) -> bool {
        self.identity_curvature
    }

    /// Checks that `xi` is strictly feasible (`A xi < B` componentwise).
    pub fn check_slater_point(&self, xi: &DVector<f64>) -> Result<()> {
        self.check_len("xi", xi, self.n_v())?;
        let slack = &self.b - &self.a * xi;
        match slack.iter().position(|&s| !(s > 0.0)) {
            Some(row) => Err(Error::SlaterViolation { row, bound: slack[row] }),
            None => Ok(()),
        }
    }

    pub fn primal_objective(&self, xi: &DVector<f64>) -> f64 {
        0.5 * xi.dot(&(&self.h * xi)) + self.g.dot(xi)
    }

    pub(crate) fn apply_h_inverse(&self, x: &mut DVector<f64>) {
        if !self.identity_curvature {
            self.factor.solve_in_place(x);
        }
    }

    pub(crate) fn check_len(&self, what: &'static str, v: &DVector<f64>, expected: usize) -> Result<()> {
        if v.len() != expected {
            return Err(Error::DimensionMismatch { what, expected, got: v.len() });
        }
        Ok(())
    }

    /// `A^T mu + G`.
    fn shifted(&self, mu: &DVector<f64>) -> DVector<f64> {
        let mut w = self.g.clone();
        w.gemv_tr(1.0, &self.a, mu, 1.0);
        w
    }
}

/// Dual objective `f(mu) = 1/2 (A^T mu + G)^T H^{-1} (A^T mu + G) + B^T mu`.
///
/// The expression is evaluated for any `mu`; the dual problem restricts it to
/// `mu >= 0`.
pub fn dual_objective(problem: &QpProblem, mu: &DVector<f64>) -> Result<f64> {
    problem.check_len("mu", mu, problem.n_c())?;
    let w = problem.shifted(mu);
    let mut y = w.clone();
    problem.apply_h_inverse(&mut y);
    Ok(0.5 * w.dot(&y) + problem.b.dot(mu))
}

/// `grad f(mu) = A H^{-1} (A^T mu + G) + B`.
pub fn dual_gradient(problem: &QpProblem, mu: &DVector<f64>) -> Result<DVector<f64>> {
    problem.check_len("mu", mu, problem.n_c())?;
    let mut y = problem.shifted(mu);
    problem.apply_h_inverse(&mut y);
    let mut grad = problem.b.clone();
    grad.gemv(1.0, &problem.a, &y, 1.0);
    Ok(grad)
}

/// Minimizer of the Lagrangian for fixed multipliers: `xi = H^{-1}(-A^T mu - G)`.
pub fn primal_from_dual(problem: &QpProblem, mu: &DVector<f64>) -> Result<DVector<f64>> {
    problem.check_len("mu", mu, problem.n_c())?;
    let mut xi = problem.shifted(mu);
    problem.apply_h_inverse(&mut xi);
    xi.neg_mut();
    Ok(xi)
}

/// Returns the cached Lipschitz constant of the dual gradient.
pub fn lipschitz_constant(problem: &QpProblem) -> f64 {
    problem.lipschitz
}

/// Power iteration for the largest eigenvalue of a symmetric PSD operator.
///
/// Rayleigh quotients of power iterates are non-decreasing for PSD operators,
/// so the larger of the results from several starts is the better estimate.
fn power_iteration<F>(dim: usize, starts: &[DVector<f64>], apply: F) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut best = 0.0f64;
    for start in starts {
        debug_assert_eq!(start.len(), dim);
        let norm = start.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = start / norm;
        let mut lambda = 0.0f64;
        for _ in 0..POWER_MAX_ITERS {
            let w = apply(&v);
            let next = v.dot(&w);
            let wn = w.norm();
            if wn == 0.0 {
                lambda = 0.0;
                break;
            }
            v = w / wn;
            let done = (next - lambda).abs() <= POWER_TOL * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
        best = best.max(lambda);
    }
    best
}

fn dual_lipschitz(factor: &CholeskyFactor, a: &DMatrix<f64>) -> f64 {
    let n_c = a.nrows();
    if n_c == 0 || a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    // A H^{-1} A^T = W W^T with W = A Z^{-1}
    let w = factor.right_solve(a);
    let row_norms: Vec<f64> = (0..n_c).map(|i| w.row(i).norm_squared()).collect();
    let heaviest = row_norms
        .iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > row_norms[best] { i } else { best });
    let starts = [DVector::from_element(n_c, 1.0), unit(n_c, heaviest)];
    power_iteration(n_c, &starts, |v| &w * (w.transpose() * v))
}

fn min_eigenvalue(factor: &CholeskyFactor) -> f64 {
    let n = factor.dim();
    let z = factor.z();
    let lightest = (0..n).fold(0, |best, i| if z[(i, i)] < z[(best, best)] { i } else { best });
    let starts = [DVector::from_element(n, 1.0), unit(n, lightest)];
    let inv_max = power_iteration(n, &starts, |v| factor.solve(v));
    1.0 / inv_max
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// JSON interchange form: dense row-major matrices with explicit sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpProblemFile {
    pub n_v: usize,
    pub n_c: usize,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
}

impl QpProblemFile {
    pub fn from_problem(p: &QpProblem) -> Self {
        QpProblemFile {
            n_v: p.n_v(),
            n_c: p.n_c(),
            h: p.h.transpose().iter().copied().collect(),
            g: p.g.iter().copied().collect(),
            a: p.a.transpose().iter().copied().collect(),
            b: p.b.iter().copied().collect(),
        }
    }

    pub fn into_problem(self) -> Result<QpProblem> {
        let (n_v, n_c) = (self.n_v, self.n_c);
        let check = |field: &str, len: usize, expected: usize| {
            if len != expected {
                Err(Error::schema(field, format!("expected {expected} entries, found {len}")))
            } else {
                Ok(())
            }
        };
        check("H", self.h.len(), n_v * n_v)?;
        check("G", self.g.len(), n_v)?;
        check("A", self.a.len(), n_c * n_v)?;
        check("B", self.b.len(), n_c)?;
        let h = DMatrix::from_row_slice(n_v, n_v, &self.h);
        let a = DMatrix::from_row_slice(n_c, n_v, &self.a);
        QpProblem::new(h, DVector::from_vec(self.g), a, DVector::from_vec(self.b)).map_err(|e| match e {
            Error::NotSymmetric { asymmetry, .. } => {
                Error::schema("H", format!("not symmetric (relative asymmetry {asymmetry:e})"))
            }
            Error::NotPositiveDefinite { pivot, .. } => {
                Error::schema("H", format!("not positive definite (pivot {pivot})"))
            }
            other => other,
        })
    }
}

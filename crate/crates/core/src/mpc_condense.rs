//! Linear MPC to dense QP.
//!
//! With the predicted states stacked as `x = A1 x_k + A2 u` the horizon cost
//! becomes `1/2 u^T H u + G(x_k)^T u + c(x_k)` where
//! `H = A2^T Q1 A2 + R1` and `G(x_k) = A2^T Q1 A1 x_k`. Box-style rows
//! `F x <= 1` on every predicted state, optional terminal rows `Phi x_N <= 1`
//! and `Gc u <= 1` on every input give `A u <= B(x_k)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual_pgm::{QpProblem, SolveResult};
use crate::error::{Error, Result};
use crate::precondition::cholesky;

const DARE_MAX_ITERS: usize = 10_000;
const DARE_TOL: f64 = 1e-12;
const SPD_SYM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// State rows, `F x <= 1`.
    pub f: DMatrix<f64>,
    /// Input rows, `Gc u <= 1`.
    pub gc: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Terminal weight.
    pub p: DMatrix<f64>,
    /// Terminal rows on `x_N`; may have zero rows.
    pub phi: DMatrix<f64>,
    pub horizon: usize,
}

impl MpcSpec {
    /// Builds a spec with the terminal weight from [`dare`] and `Phi = F`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        gc: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        horizon: usize,
    ) -> Result<Self> {
        let p = dare(&a, &b, &q, &r)?;
        let phi = f.clone();
        let spec = MpcSpec { a, b, f, gc, q, r, p, phi, horizon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_terminal_rows(mut self, phi: DMatrix<f64>) -> Result<Self> {
        self.phi = phi;
        self.validate()?;
        Ok(self)
    }

    pub fn without_terminal_rows(mut self) -> Self {
        self.phi = DMatrix::zeros(0, self.n());
        self
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `(n_v, n_c)` of the condensed problem.
    pub fn qp_size(&self) -> (usize, usize) {
        let n_v = self.horizon * self.m();
        let n_c = self.horizon * self.f.nrows() + self.phi.nrows() + self.horizon * self.gc.nrows();
        (n_v, n_c)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        let dim = |what: &'static str, expected: usize, got: usize| {
            if expected != got {
                Err(Error::DimensionMismatch { what, expected, got })
            } else {
                Ok(())
            }
        };
        dim("A columns", n, self.a.ncols())?;
        dim("B rows", n, self.b.nrows())?;
        dim("F columns", n, self.f.ncols())?;
        dim("Gc columns", m, self.gc.ncols())?;
        dim("Phi columns", n, self.phi.ncols())?;
        dim("Q rows", n, self.q.nrows())?;
        dim("R rows", m, self.r.nrows())?;
        dim("P rows", n, self.p.nrows())?;
        if n == 0 || m == 0 {
            return Err(Error::domain("state and input dimensions must be >= 1"));
        }
        if self.horizon < 1 {
            return Err(Error::domain("horizon must be >= 1"));
        }
        check_spd("Q", &self.q)?;
        check_spd("R", &self.r)?;
        check_spd("P", &self.p)?;
        Ok(())
    }
}

fn check_spd(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { what, expected: m.nrows(), got: m.ncols() });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax() / scale;
    if asym > SPD_SYM_TOL {
        return Err(Error::NotSymmetric { what, asymmetry: asym });
    }
    cholesky(m)?;
    Ok(())
}

/// Stacked free and forced response maps.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    /// Block `i` (0-based) is `A^{i+1}`; `Nn x n`.
    pub a1: DMatrix<f64>,
    /// Block `(i, j)` is `A^{i-j} B` for `i >= j`, zero above; `Nn x Nm`.
    pub a2: DMatrix<f64>,
}

pub fn prediction_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>, horizon: usize) -> Result<PredictionMatrices> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { what: "A columns", expected: n, got: a.ncols() });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch { what: "B rows", expected: n, got: b.nrows() });
    }
    if horizon < 1 {
        return Err(Error::domain("horizon must be >= 1"));
    }
    let mut a1 = DMatrix::zeros(horizon * n, n);
    let mut a2 = DMatrix::zeros(horizon * n, horizon * m);
    // powers[k] = A^k B
    let mut power = a.clone();
    let mut forced = b.clone();
    for i in 0..horizon {
        a1.view_mut((i * n, 0), (n, n)).copy_from(&power);
        for j in 0..horizon - i {
            a2.view_mut(((i + j) * n, j * m), (n, m)).copy_from(&forced);
        }
        power = a * &power;
        forced = a * &forced;
    }
    Ok(PredictionMatrices { a1, a2 })
}

/// Relative DARE residual `||P - (Q + A'PA - A'PB (R + B'PB)^{-1} B'PA)||_F / ||P||_F`.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let next = riccati_step(a, b, q, r, p)?;
    Ok((p - next).norm() / p.norm().max(f64::MIN_POSITIVE))
}

fn riccati_step(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let factor = cholesky(&s)?;
    // K = S^{-1} B'PA, one solve per column
    let bpa = b.transpose() * &pa;
    let mut k = DMatrix::zeros(bpa.nrows(), bpa.ncols());
    for j in 0..bpa.ncols() {
        let col = factor.solve(&bpa.column(j).into_owned());
        k.set_column(j, &col);
    }
    let next = q + a.transpose() * &pa - bpa.transpose() * k;
    Ok((&next + next.transpose()) * 0.5)
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration from `P = Q`.
pub fn dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::domain("inconsistent DARE dimensions"));
    }
    check_spd("Q", q)?;
    check_spd("R", r)?;
    let mut p = q.clone();
    let mut change = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERS {
        let next = riccati_step(a, b, q, r, &p)?;
        if !next.iter().all(|x| x.is_finite()) {
            break;
        }
        change = (&next - &p).norm() / next.norm().max(f64::MIN_POSITIVE);
        p = next;
        if change <= DARE_TOL {
            return Ok(p);
        }
    }
    Err(Error::DareNotConverged { iterations: DARE_MAX_ITERS, change })
}

/// Condensed problem plus the constant cost term.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub problem: QpProblem,
    /// `c(x_k)`: free-response cost of the predicted states plus the stage-0 state cost.
    pub constant: f64,
}

impl CondensedQp {
    /// Horizon cost of an input trajectory.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        self.problem.primal_objective(u) + self.constant
    }
}

/// Stacked state rows `Fbar`: `F` on every predicted state, then `Phi` on `x_N`.
fn stacked_state_rows(spec: &MpcSpec) -> DMatrix<f64> {
    let n = spec.n();
    let nf = spec.f.nrows();
    let w = spec.phi.nrows();
    let hz = spec.horizon;
    let mut fbar = DMatrix::zeros(hz * nf + w, hz * n);
    for i in 0..hz {
        fbar.view_mut((i * nf, i * n), (nf, n)).copy_from(&spec.f);
    }
    fbar.view_mut((hz * nf, (hz - 1) * n), (w, n)).copy_from(&spec.phi);
    fbar
}

pub fn condense(spec: &MpcSpec, x_k: &DVector<f64>) -> Result<CondensedQp> {
    spec.validate()?;
    let n = spec.n();
    let m = spec.m();
    let hz = spec.horizon;
    if x_k.len() != n {
        return Err(Error::DimensionMismatch { what: "x_k", expected: n, got: x_k.len() });
    }
    let pm = prediction_matrices(&spec.a, &spec.b, hz)?;

    let mut q1 = DMatrix::zeros(hz * n, hz * n);
    for i in 0..hz - 1 {
        q1.view_mut((i * n, i * n), (n, n)).copy_from(&spec.q);
    }
    q1.view_mut(((hz - 1) * n, (hz - 1) * n), (n, n)).copy_from(&spec.p);
    let mut r1 = DMatrix::zeros(hz * m, hz * m);
    for i in 0..hz {
        r1.view_mut((i * m, i * m), (m, m)).copy_from(&spec.r);
    }

    let q1a2 = &q1 * &pm.a2;
    let h = pm.a2.transpose() * &q1a2 + r1;
    let h = (&h + h.transpose()) * 0.5;
    let free = &pm.a1 * x_k;
    let g = q1a2.transpose() * &free;
    let constant = 0.5 * free.dot(&(&q1 * &free)) + 0.5 * x_k.dot(&(&spec.q * x_k));

    let fbar = stacked_state_rows(spec);
    let ng = spec.gc.nrows();
    let n_state_rows = fbar.nrows();
    let mut a = DMatrix::zeros(n_state_rows + hz * ng, hz * m);
    a.view_mut((0, 0), (n_state_rows, hz * m)).copy_from(&(&fbar * &pm.a2));
    for i in 0..hz {
        a.view_mut((n_state_rows + i * ng, i * m), (ng, m)).copy_from(&spec.gc);
    }
    let mut b = DVector::from_element(a.nrows(), 1.0);
    b.rows_mut(0, n_state_rows).axpy(-1.0, &(&fbar * &free), 1.0);

    // u = 0 must be strictly feasible
    if let Some(row) = b.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::SlaterViolation { row, bound: b[row] });
    }

    Ok(CondensedQp {
        problem: QpProblem::new(h, g, a, b)?,
        constant,
    })
}

/// First `m` entries of the optimal input trajectory.
pub fn first_input(result: &SolveResult, m: usize) -> Result<DVector<f64>> {
    let n_v = result.xi_star.len();
    if m == 0 || !n_v.is_multiple_of(m) {
        return Err(Error::DimensionMismatch { what: "input dimension", expected: n_v, got: m });
    }
    Ok(result.xi_star.rows(0, m).into_owned())
}

/// JSON interchange for [`MpcSpec`]. Matrices are arrays of rows.
///
/// A missing `P` is computed with [`dare`]; a missing `Phi` defaults to `F`,
/// and `"Phi": []` means no terminal rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpcSpecFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "Gc")]
    pub gc: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Phi", default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<Vec<f64>>>,
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::schema(field, format!("row {i} has {} entries, expected {ncols}", row.len())));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl MpcSpecFile {
    /// Returns the spec and whether `P` had to be computed.
    pub fn into_spec(self) -> Result<(MpcSpec, bool)> {
        let n = self.a.len();
        let m = self.b.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::schema(if n == 0 { "A" } else { "B" }, "must be non-empty"));
        }
        let a = rows_to_matrix("A", &self.a, n)?;
        let b = rows_to_matrix("B", &self.b, m)?;
        if b.nrows() != n {
            return Err(Error::schema("B", format!("expected {n} rows, found {}", b.nrows())));
        }
        let f = rows_to_matrix("F", &self.f, n)?;
        let gc = rows_to_matrix("Gc", &self.gc, m)?;
        let q = rows_to_matrix("Q", &self.q, n)?;
        let r = rows_to_matrix("R", &self.r, m)?;
        if q.nrows() != n {
            return Err(Error::schema("Q", format!("expected {n} rows")));
        }
        if r.nrows() != m {
            return Err(Error::schema("R", format!("expected {m} rows")));
        }
        let computed = self.p.is_none();
        let p = match &self.p {
            Some(rows) => rows_to_matrix("P", rows, n)?,
            None => dare(&a, &b, &q, &r)?,
        };
        let phi = match &self.phi {
            Some(rows) => rows_to_matrix("Phi", rows, n)?,
            None => f.clone(),
        };
        let spec = MpcSpec { a, b, f, gc, q, r, p, phi, horizon: self.horizon };
        spec.validate()?;
        Ok((spec, computed))
    }

    pub fn from_spec(spec: &MpcSpec) -> Self {
        MpcSpecFile {
            a: matrix_to_rows(&spec.a),
            b: matrix_to_rows(&spec.b),
            f: matrix_to_rows(&spec.f),
            gc: matrix_to_rows(&spec.gc),
            q: matrix_to_rows(&spec.q),
            r: matrix_to_rows(&spec.r),
            horizon: spec.horizon,
            p: Some(matrix_to_rows(&spec.p)),
            phi: Some(matrix_to_rows(&spec.phi)),
        }
    }
}

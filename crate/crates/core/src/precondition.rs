//! Cholesky change of variables `psi = Z xi` with `H = Z^T Z`.
//!
//! `Z` is kept upper triangular (the transpose of the usual lower factor). The
//! transformed program has identity curvature, linear term `Z^{-T} G` and
//! constraint matrix `A Z^{-1}`; solutions map back through `Z xi = psi`.

use nalgebra::{DMatrix, DVector};

use crate::dual_pgm::QpProblem;
use crate::error::{Error, Result};

/// Upper-triangular `Z` with positive diagonal and `Z^T Z = H`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    z: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    /// Solves `Z x = rhs` in place (back substitution).
    pub fn solve_upper_in_place(&self, x: &mut DVector<f64>) {
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.z[(i, k)] * x[k];
            }
            x[i] = s / self.z[(i, i)];
        }
    }

    /// Solves `Z^T x = rhs` in place (forward substitution).
    pub fn solve_upper_transpose_in_place(&self, x: &mut DVector<f64>) {
        let n = self.dim();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.z[(k, i)] * x[k];
            }
            x[i] = s / self.z[(i, i)];
        }
    }

    /// Applies `H^{-1}` via the two triangular solves.
    pub fn solve_in_place(&self, x: &mut DVector<f64>) {
        self.solve_upper_transpose_in_place(x);
        self.solve_upper_in_place(x);
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = rhs.clone();
        self.solve_in_place(&mut x);
        x
    }

    /// `M Z^{-1}`, one forward solve per row of `M`.
    pub fn right_solve(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        let mut row = DVector::zeros(m.ncols());
        for i in 0..m.nrows() {
            row.copy_from(&m.row(i).transpose());
            self.solve_upper_transpose_in_place(&mut row);
            out.row_mut(i).copy_from(&row.transpose());
        }
        out
    }
}

/// Factors a symmetric positive-definite matrix as `H = Z^T Z`.
///
/// Only the upper triangle of `h` is read.
pub fn cholesky(h: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "H columns",
            expected: n,
            got: h.ncols(),
        });
    }
    let mut z = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = h[(j, j)];
        for k in 0..j {
            d -= z[(k, j)] * z[(k, j)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        z[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = h[(j, i)];
            for k in 0..j {
                s -= z[(k, j)] * z[(k, i)];
            }
            z[(j, i)] = s / djj;
        }
    }
    Ok(CholeskyFactor { z })
}

/// Rewrites the problem in `psi = Z xi` coordinates.
pub fn transform(problem: &QpProblem) -> Result<(QpProblem, CholeskyFactor)> {
    let factor = problem.factor().clone();
    let n = problem.n_v();
    let mut g = problem.g().clone();
    factor.solve_upper_transpose_in_place(&mut g);
    let a = factor.right_solve(problem.a());
    let transformed = QpProblem::new(DMatrix::identity(n, n), g, a, problem.b().clone())?;
    Ok((transformed, factor))
}

/// Maps a transformed solution back: solves `Z xi = psi`.
pub fn recover(factor: &CholeskyFactor, psi: &DVector<f64>) -> Result<DVector<f64>> {
    if psi.len() != factor.dim() {
        return Err(Error::DimensionMismatch {
            what: "psi",
            expected: factor.dim(),
            got: psi.len(),
        });
    }
    if (0..factor.dim()).any(|i| factor.z[(i, i)] == 0.0) {
        return Err(Error::domain("factor has a zero diagonal entry"));
    }
    let mut xi = psi.clone();
    factor.solve_upper_in_place(&mut xi);
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn two_by_two_factor() {
        let f = cholesky(&dmatrix![4.0, 2.0; 2.0, 3.0]).unwrap();
        let expect = dmatrix![2.0, 1.0; 0.0, 2f64.sqrt()];
        assert!((f.z() - expect).norm() < 1e-15);
    }

    #[test]
    fn identity_and_diagonal() {
        let f = cholesky(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.z(), &DMatrix::<f64>::identity(4, 4));
        let d = DVector::from_vec(vec![1.0, 4.0, 9.0, 0.25]);
        let f = cholesky(&DMatrix::from_diagonal(&d)).unwrap();
        assert_eq!(f.z(), &DMatrix::from_diagonal(&d.map(f64::sqrt)));
    }

    #[test]
    fn rejects_indefinite() {
        let err = cholesky(&dmatrix![1.0, 2.0; 2.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
        assert!(cholesky(&dmatrix![0.0]).is_err());
        assert!(cholesky(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn back_substitution_by_hand() {
        let f = cholesky(&dmatrix![4.0, 2.0; 2.0, 3.0]).unwrap();
        let xi = recover(&f, &DVector::from_vec(vec![3.0, 2f64.sqrt()])).unwrap();
        assert!((xi[0] - 1.0).abs() < 1e-15 && (xi[1] - 1.0).abs() < 1e-15);
        assert!(recover(&f, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn solve_applies_inverse() {
        let h = dmatrix![4.0, 2.0, 0.5; 2.0, 3.0, 0.1; 0.5, 0.1, 2.0];
        let f = cholesky(&h).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = f.solve(&b);
        assert!((&h * x - b).norm() < 1e-14);
    }

    #[test]
    fn worked_instance_transform() {
        let p = QpProblem::new(
            DMatrix::from_diagonal_element(2, 2, 2.0),
            DVector::from_vec(vec![-2.0, -2.0]),
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.5, 0.5]),
        )
        .unwrap();
        let (t, f) = transform(&p).unwrap();
        let s = 2f64.sqrt();
        assert!((f.z() - DMatrix::from_diagonal_element(2, 2, s)).norm() < 1e-15);
        assert_eq!(t.h(), &DMatrix::<f64>::identity(2, 2));
        assert!((t.g() - DVector::from_element(2, -2.0 / s)).norm() < 1e-15);
        assert!((t.a() - DMatrix::from_diagonal_element(2, 2, 1.0 / s)).norm() < 1e-15);
        assert_eq!(t.b(), p.b());
        assert!((t.lipschitz() - p.lipschitz()).abs() < 1e-12);
    }

    #[test]
    fn identity_curvature_is_a_fixed_point() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![0.3, -1.0]),
            dmatrix![1.0, 2.0; -1.0, 0.5; 0.0, 1.0],
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
        )
        .unwrap();
        let (t, _) = transform(&p).unwrap();
        assert_eq!(t.h(), p.h());
        assert_eq!(t.g(), p.g());
        assert_eq!(t.a(), p.a());
        assert_eq!(t.b(), p.b());
    }
}

//! Dense SPD solves for the regularized projection used when halving.
//!
//! The projection of the removed half onto the survivors' span minimizes
//! `theta' (K2 + eta I) theta - 2 theta' K21 alpha`, whose minimizer is
//! `theta = (K2 + eta I)^{-1} K21 alpha`. `K2 + eta I` is factored with a
//! plain Cholesky decomposition; a non-positive pivot is reported so the
//! caller can retry with a larger `eta`.

use crate::error::{Error, Result};

/// Maximum number of `eta` doublings in [`solve_theta_with_retry`].
pub const MAX_ETA_DOUBLINGS: usize = 20;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L L'`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch(format!(
                "cholesky of a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::FactorizationFailure { row: j, pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        let l = &self.l;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
///
/// One step of iterative refinement is applied after the triangular solves.
pub fn spd_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} system with right-hand side of length {}",
            a.rows(),
            a.cols(),
            b.len()
        )));
    }
    let chol = Cholesky::factor(a)?;
    let mut x = chol.solve(b);
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = chol.solve(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
    Ok(x)
}

/// Inputs of the regularized projection: survivors' Gram `k2` (m x m),
/// cross Gram `k21` (m x k, survivors by removed), removed coefficients
/// `alpha` (length k) and regularizer `eta > 0`.
#[derive(Clone, Debug)]
pub struct ProjectionProblem {
    pub k2: Matrix,
    pub k21: Matrix,
    pub alpha: Vec<f64>,
    pub eta: f64,
}

impl ProjectionProblem {
    pub fn new(k2: Matrix, k21: Matrix, alpha: Vec<f64>, eta: f64) -> Result<Self> {
        let p = Self { k2, k21, alpha, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        let m = self.k2.rows();
        if self.k2.cols() != m || self.k21.rows() != m || self.k21.cols() != self.alpha.len() {
            return Err(Error::DimensionMismatch(format!(
                "K2 {}x{}, K21 {}x{}, alpha {}",
                self.k2.rows(),
                self.k2.cols(),
                self.k21.rows(),
                self.k21.cols(),
                self.alpha.len()
            )));
        }
        if !self.k2.is_symmetric(1e-12) {
            return Err(Error::DimensionMismatch("K2 is not symmetric".into()));
        }
        Ok(())
    }

    /// `K21 alpha`.
    pub fn rhs(&self) -> Vec<f64> {
        self.k21.mul_vec(&self.alpha)
    }

    /// `K2 + eta I`.
    pub fn system(&self) -> Matrix {
        let mut a = self.k2.clone();
        for i in 0..a.rows() {
            a[(i, i)] += self.eta;
        }
        a
    }

    /// `theta' (K2 + eta I) theta - 2 theta' K21 alpha`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let a = self.system();
        let at = a.mul_vec(theta);
        let b = self.rhs();
        theta
            .iter()
            .zip(at.iter().zip(&b))
            .map(|(t, (ati, bi))| t * ati - 2.0 * t * bi)
            .sum()
    }
}

/// `theta = (K2 + eta I)^{-1} K21 alpha`.
pub fn solve_theta(p: &ProjectionProblem) -> Result<Vec<f64>> {
    p.validate()?;
    let b = p.rhs();
    if b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; b.len()]);
    }
    spd_solve(&p.system(), &b)
}

/// [`solve_theta`] with the regularizer doubled on every factorization
/// failure, up to [`MAX_ETA_DOUBLINGS`] times. Returns `theta` and the
/// regularizer that succeeded.
pub fn solve_theta_with_retry(p: &ProjectionProblem) -> Result<(Vec<f64>, f64)> {
    let mut problem = p.clone();
    for _ in 0..=MAX_ETA_DOUBLINGS {
        match solve_theta(&problem) {
            Ok(theta) => return Ok((theta, problem.eta)),
            Err(Error::FactorizationFailure { .. }) => problem.eta *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SolverDiverged(MAX_ETA_DOUBLINGS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn identity_system() {
        let b = vec![1.5, -2.0, 0.25];
        assert_eq!(spd_solve(&Matrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn diagonal_system() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let x = spd_solve(&a, &[2.0, 8.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }

    #[test]
    fn identity_gram_with_unit_eta_halves() {
        let k21 = Matrix::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.5]]).unwrap();
        let alpha = vec![1.0, 2.0];
        let p = ProjectionProblem::new(Matrix::identity(2), k21.clone(), alpha.clone(), 1.0)
            .unwrap();
        let theta = solve_theta(&p).unwrap();
        let b = k21.mul_vec(&alpha);
        for (t, bi) in theta.iter().zip(&b) {
            assert!((t - bi / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_solve() {
        let p = ProjectionProblem::new(
            Matrix::identity(1),
            Matrix::from_rows(&[vec![0.5]]).unwrap(),
            vec![2.0],
            0.0005,
        )
        .unwrap();
        let theta = solve_theta(&p).unwrap();
        assert!((theta[0] - 1.0 / 1.0005).abs() < 1e-15);
        assert!((theta[0] - 0.99950).abs() < 1e-5);
    }

    #[test]
    fn zero_rhs_gives_exact_zero() {
        let k2 = Matrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let p = ProjectionProblem::new(k2, Matrix::zeros(2, 2), vec![1.0, -1.0], 0.01).unwrap();
        assert_eq!(solve_theta(&p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn non_positive_pivot_reported() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            spd_solve(&a, &[1.0, 1.0]),
            Err(Error::FactorizationFailure { row: 1, .. })
        ));
    }

    #[test]
    fn retry_ladder_recovers_indefinite_gram() {
        // K2 has eigenvalue -0.5; eta must reach at least 0.5.
        let k2 = Matrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let k21 = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let p = ProjectionProblem::new(k2, k21, vec![1.0], 0.01).unwrap();
        let (theta, eta) = solve_theta_with_retry(&p).unwrap();
        assert!(eta > 0.5);
        let mut solved = p.clone();
        solved.eta = eta;
        let r = solved.system().mul_vec(&theta);
        let b = solved.rhs();
        assert!((r[0] - b[0]).abs() < 1e-12 && (r[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn retry_ladder_gives_up() {
        let k2 = Matrix::from_rows(&[vec![-1e9]]).unwrap();
        let k21 = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let p = ProjectionProblem::new(k2, k21, vec![1.0], 1e-6).unwrap();
        assert_eq!(
            solve_theta_with_retry(&p),
            Err(Error::SolverDiverged(MAX_ETA_DOUBLINGS))
        );
    }

    #[test]
    fn invalid_problems_rejected() {
        let k21 = Matrix::zeros(2, 1);
        assert!(ProjectionProblem::new(Matrix::identity(2), k21.clone(), vec![1.0], 0.0).is_err());
        assert!(ProjectionProblem::new(Matrix::identity(2), k21, vec![1.0, 2.0], 0.1).is_err());
        let asym = Matrix::from_rows(&[vec![1.0, 0.1], vec![0.2, 1.0]]).unwrap();
        assert!(ProjectionProblem::new(asym, Matrix::zeros(2, 1), vec![1.0], 0.1).is_err());
    }

    #[test]
    fn residual_on_moderate_system() {
        let n = 10;
        let b_mat = Matrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let a = Matrix::from_fn(n, n, |i, j| {
            let mut s: f64 = (0..n).map(|k| b_mat[(i, k)] * b_mat[(j, k)]).sum();
            if i == j {
                s += 0.1;
            }
            s
        });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = spd_solve(&a, &b).unwrap();
        let ax = a.mul_vec(&x);
        let res: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(max_abs(&res) <= 1e-8 * (1.0 + max_abs(&b)));
    }
}

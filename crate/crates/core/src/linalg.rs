//! Small dense linear algebra for d up to a few dozen.
//!
//! Everything here is plain row-major `f64`: a cyclic Jacobi eigensolver,
//! Cholesky solves, the running covariance accumulator, and the three
//! estimators the policies need (minimum-norm least squares, Bayesian
//! posterior mean, ridge).

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Prior;

/// Tolerance used when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Jacobi stops once the off-diagonal Frobenius norm drops below this
/// (relative to `max(1, ||M||_F)`).
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Eigenvalues at or below `PINV_CUTOFF * lambda_max` are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = scale;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `M v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, v)?;
        Ok(self.row_iter().map(|row| dot(row, v)).collect())
    }

    /// `M^T v`.
    pub fn tmul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, v)?;
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.row_iter().zip(v) {
            axpy(vi, row, &mut out);
        }
        Ok(out)
    }

    /// `M^T M`.
    pub fn gram(&self) -> Matrix {
        let mut g = Matrix::zeros(self.cols, self.cols);
        for row in self.row_iter() {
            g.add_outer(row, 1.0);
        }
        g
    }

    /// `self += scale * x x^T`, updating both triangles with the same products
    /// so the result stays exactly symmetric.
    pub fn add_outer(&mut self, x: &[f64], scale: f64) {
        debug_assert!(self.is_square() && x.len() == self.rows);
        let n = self.rows;
        for i in 0..n {
            let xi = scale * x[i];
            for j in i..n {
                let v = xi * x[j];
                self.data[i * n + j] += v;
                if i != j {
                    self.data[j * n + i] += v;
                }
            }
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|M_ij - M_ji|`; infinite for non-square input.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Errors unless the matrix is square and symmetric within
    /// `SYMMETRY_TOL * max(1, max|M_ij|)`.
    pub fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: self.cols,
            });
        }
        let asym = self.max_asymmetry();
        if asym > SYMMETRY_TOL * self.max_abs().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(())
    }

    /// `v^T M v`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.mul_vec(v)?))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn check_len(expected: usize, v: &[f64]) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.len() });
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `L` with `M = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    pub fn new(m: &Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        let n = m.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = m[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lower.rows();
        check_len(n, b)?;
        let l = &self.lower;
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
        Ok(y)
    }

    /// `b^T M^{-1} b`, computed as `|L^{-1} b|^2` so it is never negative.
    pub fn inverse_quad_form(&self, b: &[f64]) -> Result<f64> {
        let n = self.lower.rows();
        check_len(n, b)?;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Ok(dot(&y, &y))
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.lower.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrize away rounding noise
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        Ok(inv)
    }
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
    pub sweeps: usize,
    pub residual: f64,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition.
pub fn symmetric_eigen(m: &Matrix) -> Result<SymmetricEigen> {
    m.check_symmetric()?;
    let n = m.rows();
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let tol = JACOBI_TOL * m.frobenius_norm().max(1.0);

    let mut sweeps = 0;
    let mut residual = off_diagonal_norm(&a);
    while residual > tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNoConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        residual = off_diagonal_norm(&a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
        residual,
    })
}

/// Extreme eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub fn min_eigenvalue(m: &Matrix) -> Result<EigenReport> {
    if m.rows() == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let eig = symmetric_eigen(m)?;
    Ok(EigenReport {
        lambda_min: eig.values[0],
        lambda_max: *eig.values.last().unwrap(),
        iterations: eig.sweeps,
        residual: eig.residual,
    })
}

/// Running `Z = sum x x^T` and `X^T r = sum r x` over absorbed observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceAccumulator {
    z: Matrix,
    xr: Vec<f64>,
    n: usize,
}

impl CovarianceAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            z: Matrix::zeros(d, d),
            xr: vec![0.0; d],
            n: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.xr.len()
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn xr(&self) -> &[f64] {
        &self.xr
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn absorb(&mut self, x: &[f64], r: f64) -> Result<()> {
        check_len(self.dim(), x)?;
        self.z.add_outer(x, 1.0);
        axpy(r, x, &mut self.xr);
        self.n += 1;
        Ok(())
    }

    /// Minimum-norm least-squares estimate `Z^+ X^T r`; zero when empty.
    pub fn ols_estimate(&self) -> Result<Vec<f64>> {
        ols_estimate(self)
    }
}

pub fn ols_estimate(acc: &CovarianceAccumulator) -> Result<Vec<f64>> {
    let d = acc.dim();
    if acc.count() == 0 {
        return Ok(vec![0.0; d]);
    }
    let eig = symmetric_eigen(acc.z())?;
    let lambda_max = *eig.values.last().unwrap();
    let mut theta = vec![0.0; d];
    if lambda_max <= 0.0 {
        return Ok(theta);
    }
    let cutoff = PINV_CUTOFF * lambda_max;
    for (i, &lambda) in eig.values.iter().enumerate() {
        if lambda <= cutoff {
            continue;
        }
        let coef = (0..d).map(|k| eig.vectors[(k, i)] * acc.xr()[k]).sum::<f64>() / lambda;
        for k in 0..d {
            theta[k] += coef * eig.vectors[(k, i)];
        }
    }
    Ok(theta)
}

/// Posterior mean `(Z + Sigma^-1)^-1 (X^T r + Sigma^-1 mean)` under a Gaussian
/// prior; exactly the prior mean when no data has been absorbed.
pub fn posterior_mean(prior: &Prior, acc: &CovarianceAccumulator) -> Result<Vec<f64>> {
    check_len(prior.dim(), acc.xr())?;
    if acc.count() == 0 {
        return Ok(prior.mean().to_vec());
    }
    let precision = prior.precision();
    let system = acc.z().add(precision)?;
    let mut rhs = precision.mul_vec(prior.mean())?;
    axpy(1.0, acc.xr(), &mut rhs);
    let chol = Cholesky::new(&system)
        .map_err(|_| Error::Internal("posterior system Z + Sigma^-1 is not positive definite".into()))?;
    chol.solve(&rhs)
}

/// Ridge estimate `(Z + I)^-1 X^T r` together with the factor of `Z + I`.
pub fn ridge_estimate(acc: &CovarianceAccumulator) -> Result<(Vec<f64>, Cholesky)> {
    let system = acc.z().add(&Matrix::identity(acc.dim()))?;
    let chol = Cholesky::new(&system)?;
    let theta = chol.solve(acc.xr())?;
    Ok((theta, chol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn absorb_zero_vector_only_counts() {
        let mut acc = CovarianceAccumulator::new(2);
        acc.absorb(&[0.0, 0.0], 5.0).unwrap();
        assert_eq!(acc.z(), &Matrix::zeros(2, 2));
        assert_eq!(acc.xr(), &[0.0, 0.0]);
        assert_eq!(acc.count(), 1);
    }

    #[test]
    fn absorb_outer_product_by_hand() {
        let mut acc = CovarianceAccumulator::new(2);
        acc.absorb(&[1.0, 2.0], 3.0).unwrap();
        assert_eq!(acc.z(), &Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap());
        assert_eq!(acc.xr(), &[3.0, 6.0]);
    }

    #[test]
    fn absorb_rejects_wrong_length() {
        let mut acc = CovarianceAccumulator::new(3);
        assert!(matches!(
            acc.absorb(&[1.0], 1.0),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
        assert_eq!(acc.count(), 0);
    }

    #[test]
    fn ols_empty_is_zero() {
        let acc = CovarianceAccumulator::new(3);
        assert_eq!(ols_estimate(&acc).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn ols_scalar() {
        let mut acc = CovarianceAccumulator::new(1);
        acc.absorb(&[2.0], 4.0).unwrap();
        assert_close(ols_estimate(&acc).unwrap()[0], 2.0, 1e-14);
    }

    #[test]
    fn ols_rank_deficient_is_minimum_norm() {
        // single observation x = (1, 1), r = 2: solutions lie on t1 + t2 = 2,
        // minimum norm is (1, 1)
        let mut acc = CovarianceAccumulator::new(2);
        acc.absorb(&[1.0, 1.0], 2.0).unwrap();
        let theta = ols_estimate(&acc).unwrap();
        assert_close(theta[0], 1.0, 1e-12);
        assert_close(theta[1], 1.0, 1e-12);
    }

    #[test]
    fn posterior_scalar_by_hand() {
        let prior = Prior::new(vec![0.0], Matrix::identity(1)).unwrap();
        let mut acc = CovarianceAccumulator::new(1);
        acc.absorb(&[1.0], 1.0).unwrap();
        assert_close(posterior_mean(&prior, &acc).unwrap()[0], 0.5, 1e-15);
    }

    #[test]
    fn posterior_without_data_is_prior_mean() {
        let prior = Prior::new(vec![0.3, -2.0], Matrix::from_diag(&[2.0, 0.5])).unwrap();
        let acc = CovarianceAccumulator::new(2);
        assert_eq!(posterior_mean(&prior, &acc).unwrap(), vec![0.3, -2.0]);
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let r = min_eigenvalue(&Matrix::identity(3)).unwrap();
        assert_eq!((r.lambda_min, r.lambda_max), (1.0, 1.0));
        let r = min_eigenvalue(&Matrix::from_diag(&[2.0, 5.0])).unwrap();
        assert_eq!((r.lambda_min, r.lambda_max), (2.0, 5.0));
    }

    #[test]
    fn eigen_two_by_two_closed_form() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let r = min_eigenvalue(&m).unwrap();
        assert_close(r.lambda_min, 1.0, 1e-14);
        assert_close(r.lambda_max, 3.0, 1e-14);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn eigen_rejects_nonsymmetric() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(min_eigenvalue(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn eigenvectors_diagonalize() {
        let m = Matrix::from_rows(&[[4.0, 1.0, -2.0], [1.0, 2.0, 0.0], [-2.0, 0.0, 3.0]]).unwrap();
        let eig = symmetric_eigen(&m).unwrap();
        for i in 0..3 {
            let v: Vec<f64> = (0..3).map(|k| eig.vectors[(k, i)]).collect();
            let mv = m.mul_vec(&v).unwrap();
            for k in 0..3 {
                assert_close(mv[k], eig.values[i] * v[k], 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(Cholesky::new(&m), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn cholesky_inverse_round_trip() {
        let m = Matrix::from_rows(&[[4.0, 1.0], [1.0, 3.0]]).unwrap();
        let inv = Cholesky::new(&m).unwrap().inverse().unwrap();
        let prod = m.matmul(&inv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_close(prod[(i, j)], if i == j { 1.0 } else { 0.0 }, 1e-14);
            }
        }
    }
}

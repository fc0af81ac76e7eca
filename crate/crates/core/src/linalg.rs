//! Small dense matrices over any [`Real`] scalar and the matrix exponential.

use nalgebra::DMatrix;

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Entries above this magnitude are rejected by [`exp_matrix`].
pub const EXP_ENTRY_LIMIT: f64 = 1e3;

/// Row-major square-or-rectangular matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_f64(m: &Mat<f64>) -> Self {
        Mat { rows: m.rows, cols: m.cols, data: m.data.iter().map(|&v| T::cst(v)).collect() }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.rows, "matmul: shape mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == T::zero() {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec: shape mismatch");
        (0..self.rows)
            .map(|i| {
                let mut s = T::zero();
                for k in 0..self.cols {
                    s += self.data[i * self.cols + k] * v[k];
                }
                s
            })
            .collect()
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn scaled(&self, c: T) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * c).collect() }
    }

    pub fn add_assign(&mut self, rhs: &Mat<T>) {
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    /// Max-abs row sum of the value parts.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j).re().abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn values(&self) -> Mat<f64> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v.re()).collect() }
    }
}

impl Mat<f64> {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        Mat { rows: r, cols: c, data: rows.iter().flatten().copied().collect() }
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        Mat { rows: m.nrows(), cols: m.ncols(), data: (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect() }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Matrix exponential by scaling and squaring with a Taylor core.
///
/// Works for any [`Real`] scalar, so derivatives of `exp(a N)` with respect to
/// `a` come out of the same code. `exp(0)` is the identity bit-for-bit.
pub fn exp_matrix<T: Real>(m: &Mat<T>) -> Result<Mat<T>> {
    if m.rows != m.cols {
        return Err(Error::Structural(format!("exp_matrix: {}x{} is not square", m.rows, m.cols)));
    }
    let n = m.rows;
    for v in &m.data {
        let x = v.re();
        if !x.is_finite() || x.abs() > EXP_ENTRY_LIMIT {
            return Err(Error::domain(format!(
                "exp_matrix: entry {x} exceeds {EXP_ENTRY_LIMIT}; use a smaller box"
            )));
        }
    }
    let norm = m.norm_inf();
    if norm == 0.0 && m.data.iter().all(|v| *v == T::zero()) {
        return Ok(Mat::identity(n));
    }
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let a = m.scaled(T::cst(0.5f64.powi(squarings as i32)));
    let mut sum = Mat::identity(n);
    let mut term = Mat::identity(n);
    for k in 1..=30 {
        term = term.matmul(&a).scaled(T::cst(1.0 / k as f64));
        sum.add_assign(&term);
        if term.norm_inf() <= 1e-18 * sum.norm_inf() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    Ok(sum)
}

/// Determinant of a real square matrix (LU).
pub fn det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat<f64>, b: &[f64], tol: f64) {
        for (x, y) in a.data.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn exp_of_jordan_block() {
        let e = std::f64::consts::E;
        let m = Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        close(&exp_matrix(&m).unwrap(), &[e, e, 0.0, e], 1e-14);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let m = Mat::<f64>::zeros(3, 3);
        assert_eq!(exp_matrix(&m).unwrap(), Mat::identity(3));
    }

    #[test]
    fn exp_of_nilpotent() {
        let m = Mat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        close(&exp_matrix(&m).unwrap(), &[1.0, 1.0, 0.0, 1.0], 1e-15);
    }

    #[test]
    fn exp_rejects_large_entries() {
        let m = Mat::from_rows(&[vec![2e3]]);
        assert!(matches!(exp_matrix(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_of_rotation_generator() {
        let t: f64 = 2.5;
        let m = Mat::from_rows(&[vec![0.0, -t], vec![t, 0.0]]);
        close(&exp_matrix(&m).unwrap(), &[t.cos(), -t.sin(), t.sin(), t.cos()], 1e-14);
    }
}

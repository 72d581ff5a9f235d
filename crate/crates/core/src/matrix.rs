//! Small dense square matrices.
//!
//! Row-major storage sized for desk-scale networks (tens of nodes). Only the
//! handful of operations the rest of the crate needs are provided.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

/// Input rows that do not form a nonempty square array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("expected a nonempty square array, got {rows} rows with a row of length {cols}")]
pub struct ShapeError {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for k in 0..n {
            m[(k, k)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row vectors; every row must have the same length
    /// as the number of rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ShapeError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(ShapeError { rows: n, cols: row.len() });
            }
            data.extend_from_slice(row);
        }
        if n == 0 {
            return Err(ShapeError { rows: 0, cols: 0 });
        }
        Ok(Self { n, data })
    }

    /// Row-major construction. Panics if `data.len() != n * n`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data has wrong length");
        Self { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for k in 0..n {
            for l in 0..n {
                data.push(f(k, l));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|k| self.row(k).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |k, l| self[(l, k)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = Self::zeros(n);
        for k in 0..n {
            for j in 0..n {
                let a = self[(k, j)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(j);
                let dst = &mut out.data[k * n..(k + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "dimension mismatch");
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.row(k).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        assert_eq!(self.n, other.n, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|a| a * s).collect() }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|k| self.row(k).iter().map(|a| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.row(k).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for k in 0..self.n {
            for (s, a) in sums.iter_mut().zip(self.row(k)) {
                *s += a;
            }
        }
        sums
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|k| self[(k, k)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (k, l): (usize, usize)) -> &f64 {
        &self.data[k * self.n + l]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (k, l): (usize, usize)) -> &mut f64 {
        &mut self.data[k * self.n + l]
    }
}

impl AsRef<Matrix> for Matrix {
    fn as_ref(&self) -> &Matrix {
        self
    }
}

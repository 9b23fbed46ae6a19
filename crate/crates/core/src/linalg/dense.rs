use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this many multiply-adds a product runs on the calling thread.
const PARALLEL_FLOP_THRESHOLD: usize = 1 << 18;

/// Dense real matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major values, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::validation(format!(
                "dense matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "non-finite entry {} at ({}, {})",
                values[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, values }
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        DenseMatrix { rows, cols, values }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                out.values[j * self.rows + i] = v;
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols,
            rhs.rows,
            "matmul shape mismatch: {:?} x {:?}",
            self.shape(),
            rhs.shape()
        );
        let (n, p) = (self.rows, rhs.cols);
        let mut out = vec![0.0; n * p];
        if p == 0 {
            return DenseMatrix::from_raw(n, p, out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, rhs.row(k), out_row);
                }
            }
        };
        if n * self.cols * p >= PARALLEL_FLOP_THRESHOLD {
            out.par_chunks_mut(p).enumerate().for_each(kernel);
        } else {
            out.chunks_mut(p).enumerate().for_each(kernel);
        }
        DenseMatrix::from_raw(n, p, out)
    }

    /// `selfᵀ · rhs`.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.transpose().matmul(rhs)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul(&rhs.transpose())
    }

    /// `dm(scale) · self`: row `i` multiplied by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> DenseMatrix {
        assert_eq!(scale.len(), self.rows);
        let mut out = self.clone();
        for (row, &s) in out.values.chunks_mut(self.cols.max(1)).zip(scale) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        out
    }

    /// `self · dm(scale)`: column `j` multiplied by `scale[j]`.
    pub fn scale_cols(&self, scale: &[f64]) -> DenseMatrix {
        assert_eq!(scale.len(), self.cols);
        let mut out = self.clone();
        for row in out.values.chunks_mut(self.cols.max(1)) {
            row.iter_mut().zip(scale).for_each(|(v, &s)| *v *= s);
        }
        out
    }

    pub fn hadamard(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape());
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| a * b)
            .collect();
        DenseMatrix::from_raw(self.rows, self.cols, values)
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix::from_raw(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * s).collect(),
        )
    }

    fn zip_with(&self, rhs: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        assert_eq!(self.shape(), rhs.shape());
        let values = self
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        DenseMatrix::from_raw(self.rows, self.cols, values)
    }

    /// Adds `v` to every diagonal entry in place.
    pub fn add_to_diagonal(&mut self, v: f64) {
        for i in 0..self.rows.min(self.cols) {
            self.values[i * self.cols + i] += v;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Row-wise dot products `⟨self_i, rhs_i⟩`, i.e. `diag(self · rhsᵀ)`
    /// without forming the product.
    pub fn row_dots(&self, rhs: &DenseMatrix) -> Vec<f64> {
        assert_eq!(self.shape(), rhs.shape());
        (0..self.rows)
            .map(|i| dot(self.row(i), rhs.row(i)))
            .collect()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_nan() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.as_slice(), &[2.0, 1.0, 4.0, 3.0]);
        assert_eq!(a.t_matmul(&b).as_slice(), &[3.0, 1.0, 4.0, 2.0]);
        assert_eq!(a.matmul_t(&b).as_slice(), &[2.0, 1.0, 4.0, 3.0]);
    }

    #[test]
    fn parallel_matmul_matches_serial_kernel() {
        let a = DenseMatrix::from_fn(90, 70, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let b = DenseMatrix::from_fn(70, 60, |i, j| ((i * 5 + j) % 13) as f64 * 0.25);
        let c = a.matmul(&b);
        for i in 0..90 {
            for j in 0..60 {
                let expect: f64 = (0..70).map(|k| a.get(i, k) * b.get(k, j)).sum();
                assert!((c.get(i, j) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn row_dots_is_diag_of_product() {
        let a = DenseMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64);
        let b = DenseMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64));
        let full = a.matmul_t(&b);
        assert_eq!(a.row_dots(&b), full.diagonal());
    }

    #[test]
    fn row_and_col_scaling() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(a.scale_rows(&[2.0, 3.0]).as_slice(), &[2.0, 2.0, 3.0, 3.0]);
        assert_eq!(a.scale_cols(&[2.0, 3.0]).as_slice(), &[2.0, 3.0, 2.0, 3.0]);
    }
}

//! Dense and sparse matrix primitives used by the solver.
//!
//! Everything is `f64`. Gram matrices of sparse interaction data are badly
//! conditioned and single precision loses the small eigenvalues.

mod dense;
mod eig;
mod sparse;

use rayon::prelude::*;

pub use dense::{dot, DenseMatrix};
pub use eig::{spd_inverse, sym_eig, SymEig, CLAMP_TOLERANCE, SYMMETRY_TOLERANCE};
pub use sparse::SparseBinaryMatrix;

use crate::error::{Error, Result};

/// Default ceiling on the size of a dense Gram matrix (8 GiB).
pub const DEFAULT_GRAM_BUDGET_BYTES: usize = 8 << 30;

/// `MᵀM` for a matrix `M`.
pub trait Gram {
    fn gram_with_budget(&self, budget_bytes: usize) -> Result<DenseMatrix>;

    fn gram(&self) -> Result<DenseMatrix> {
        self.gram_with_budget(DEFAULT_GRAM_BUDGET_BYTES)
    }
}

fn check_gram_shape(rows: usize, cols: usize, budget_bytes: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::validation(format!(
            "gram of an empty {rows}x{cols} matrix"
        )));
    }
    let bytes = cols
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(std::mem::size_of::<f64>()));
    match bytes {
        Some(b) if b <= budget_bytes => Ok(()),
        _ => Err(Error::Resource(format!(
            "gram of {cols} columns needs {cols}x{cols} doubles, over the {budget_bytes} byte budget"
        ))),
    }
}

impl Gram for SparseBinaryMatrix {
    fn gram_with_budget(&self, budget_bytes: usize) -> Result<DenseMatrix> {
        check_gram_shape(self.rows(), self.cols(), budget_bytes)?;
        let n = self.cols();
        // Column-wise view: users holding each item.
        let mut holders: Vec<Vec<u32>> = vec![Vec::new(); n];
        for u in 0..self.rows() {
            for &i in self.row(u) {
                holders[i as usize].push(u as u32);
            }
        }
        let mut values = vec![0.0; n * n];
        values
            .par_chunks_mut(n)
            .zip(holders.par_iter())
            .for_each(|(out_row, users)| {
                for &u in users {
                    for &j in self.row(u as usize) {
                        out_row[j as usize] += 1.0;
                    }
                }
            });
        Ok(DenseMatrix::from_raw(n, n, values))
    }
}

impl Gram for DenseMatrix {
    fn gram_with_budget(&self, budget_bytes: usize) -> Result<DenseMatrix> {
        check_gram_shape(self.rows(), self.cols(), budget_bytes)?;
        let g = self.t_matmul(self);
        // exact symmetry regardless of summation order
        let n = g.cols();
        Ok(DenseMatrix::from_fn(n, n, |i, j| {
            if i <= j {
                g.get(i, j)
            } else {
                g.get(j, i)
            }
        }))
    }
}

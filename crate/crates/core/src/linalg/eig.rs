use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Relative asymmetry accepted before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Negative eigenvalues no larger than this (relative to the spectral
/// radius, floored at 1) are treated as round-off and clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-10;

/// Eigendecomposition `A = Q · diag(w) · Qᵀ` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the unit eigenvector for `eigenvalues[j]`.
    pub eigenvectors: DenseMatrix,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.eigenvectors
            .scale_cols(&self.eigenvalues)
            .matmul_t(&self.eigenvectors)
    }

    /// `‖Q·diag(w)·Qᵀ − A‖_F / max(1, ‖A‖_F)`.
    pub fn reconstruction_residual(&self, a: &DenseMatrix) -> f64 {
        self.reconstruct().sub(a).frobenius_norm() / a.frobenius_norm().max(1.0)
    }

    /// `‖QᵀQ − I‖_F`.
    pub fn orthonormality_residual(&self) -> f64 {
        let qtq = self.eigenvectors.t_matmul(&self.eigenvectors);
        qtq.sub(&DenseMatrix::identity(self.dim())).frobenius_norm()
    }
}

/// Symmetric eigendecomposition with ascending eigenvalues.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first; inputs whose asymmetry
/// exceeds [`SYMMETRY_TOLERANCE`] relative to their largest entry are
/// rejected. Small negative eigenvalues coming from round-off on positive
/// semidefinite inputs are clamped to zero.
pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::validation(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if n == 0 {
        return Err(Error::validation("eigendecomposition of an empty matrix"));
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let asym = a.asymmetry();
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::validation(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:.3e})"
        )));
    }

    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let max_iterations = 64 * n.max(16);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, max_iterations).ok_or(
        Error::EigenNonConvergence {
            iterations: max_iterations,
            size: n,
        },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));

    let radius = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let eigenvalues = order
        .iter()
        .map(|&k| {
            let w = eig.eigenvalues[k];
            if w < 0.0 && -w <= CLAMP_TOLERANCE * radius {
                0.0
            } else {
                w
            }
        })
        .collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    if !eigenvectors.is_finite() {
        return Err(Error::numerical(
            "eigensolver produced non-finite eigenvectors",
        ));
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::validation("inverse needs a square matrix"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)));
    let chol =
        Cholesky::new(m).ok_or_else(|| Error::numerical("matrix is not positive definite"))?;
    let inv = chol.inverse();
    Ok(DenseMatrix::from_fn(n, n, |i, j| inv[(i, j)]))
}

//! Closed-form item-item regression (EASE).
//!
//! `P = (XᵀX + λI)⁻¹`, `B = I − P·dm(1/diag(P))`, with the diagonal of `B`
//! forced to zero. The dense inverse costs `O(n³)` time and `O(n²)` memory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, DenseMatrix, Gram, SparseBinaryMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ItemItemModel {
    /// `n × n`, zero diagonal.
    pub weights: DenseMatrix,
    pub lambda: f64,
}

pub fn train_ease(x: &SparseBinaryMatrix, lambda: f64) -> Result<ItemItemModel> {
    train_ease_from_gram(x.gram()?, lambda)
}

pub fn train_ease_from_gram(mut gram: DenseMatrix, lambda: f64) -> Result<ItemItemModel> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::validation("EASE lambda must be positive"));
    }
    gram.add_to_diagonal(lambda);
    let p = spd_inverse(&gram)?;
    let n = p.rows();
    let inv_diag: Vec<f64> = p.diagonal().iter().map(|d| -1.0 / d).collect();
    let mut b = p.scale_cols(&inv_diag);
    for i in 0..n {
        // I − P·dm(1/diag P) has exactly zero diagonal in exact arithmetic
        b.set(i, i, 0.0);
    }
    Ok(ItemItemModel { weights: b, lambda })
}

impl ItemItemModel {
    pub fn num_items(&self) -> usize {
        self.weights.rows()
    }

    /// `xᵀB` for the binary history row `x`.
    pub fn score(&self, history: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_items()];
        for &i in history {
            for (o, w) in out.iter_mut().zip(self.weights.row(i)) {
                *o += w;
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        container::encode(
            EASE_KIND,
            &EaseHeader {
                lambda: self.lambda,
            },
            &self.weights,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, weights): (EaseHeader, _) = container::decode(EASE_KIND, bytes)?;
        if weights.rows() != weights.cols() {
            return Err(Error::Format("EASE weights must be square".into()));
        }
        Ok(ItemItemModel {
            weights,
            lambda: h.lambda,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}

/// Free-function form of [`ItemItemModel::score`].
pub fn score_ease(history: &[usize], model: &ItemItemModel) -> Vec<f64> {
    model.score(history)
}

const EASE_KIND: &str = "ease";

#[derive(Serialize, Deserialize)]
struct EaseHeader {
    lambda: f64,
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    /// Gauss-Jordan inverse with partial pivoting.
    fn gauss_jordan_inverse(a: &DenseMatrix) -> DenseMatrix {
        let n = a.rows();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = a.row(i).to_vec();
                r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
                r
            })
            .collect();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
                .unwrap();
            m.swap(c, p);
            let d = m[c][c];
            for v in m[c].iter_mut() {
                *v /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r][c];
                    let pivot = m[c].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot) {
                        *v -= f * pv;
                    }
                }
            }
        }
        DenseMatrix::from_fn(n, n, |i, j| m[i][n + j])
    }

    fn tiny() -> SparseBinaryMatrix {
        SparseBinaryMatrix::from_rows(3, vec![vec![0, 1], vec![1, 2], vec![0], vec![0, 1, 2]])
            .unwrap()
    }

    #[test]
    fn matches_independent_solve() {
        let x = tiny();
        let model = train_ease(&x, 1.0).unwrap();
        let mut a = x.to_dense().t_matmul(&x.to_dense());
        a.add_to_diagonal(1.0);
        let p = gauss_jordan_inverse(&a);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j {
                    0.0
                } else {
                    -p.get(i, j) / p.get(j, j)
                };
                assert!((model.weights.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_diagonal_and_duplicate_columns() {
        let x = SparseBinaryMatrix::from_rows(
            4,
            vec![
                vec![0, 1, 2],
                vec![0, 1],
                vec![2, 3],
                vec![0, 1, 3],
                vec![3],
            ],
        )
        .unwrap();
        let b = train_ease(&x, 0.5).unwrap().weights;
        for i in 0..4 {
            assert_eq!(b.get(i, i), 0.0);
        }
        assert!((b.get(0, 1) - b.get(1, 0)).abs() < 1e-12);
        for k in 2..4 {
            assert!((b.get(0, k) - b.get(1, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn scoring_is_linear_in_history() {
        let model = train_ease(&tiny(), 1.0).unwrap();
        assert_eq!(model.score(&[]), vec![0.0; 3]);
        assert_eq!(model.score(&[1]), model.weights.row(1).to_vec());
        let both = model.score(&[0, 2]);
        for j in 0..3 {
            assert!((both[j] - model.weights.get(0, j) - model.weights.get(2, j)).abs() < 1e-15);
        }
    }

    #[test]
    fn beats_zero_model_on_block_data() {
        let rows: Vec<Vec<usize>> = (0..40)
            .map(|u| {
                if u % 2 == 0 {
                    vec![0, 1, 2, 3]
                } else {
                    vec![4, 5, 6, 7]
                }
            })
            .collect();
        let x = SparseBinaryMatrix::from_rows(8, rows).unwrap();
        let model = train_ease(&x, 1.0).unwrap();
        let xd = x.to_dense();
        let err = xd.sub(&xd.matmul(&model.weights)).frobenius_norm_sq();
        assert!(err < xd.frobenius_norm_sq());
    }

    #[test]
    fn rejects_bad_lambda_and_round_trips() {
        assert!(train_ease(&tiny(), 0.0).is_err());
        let model = train_ease(&tiny(), 2.0).unwrap();
        let back = ItemItemModel::from_bytes(&model.to_bytes().unwrap()).unwrap();
        assert_eq!(back, model);
    }
}

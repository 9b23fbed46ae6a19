use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Binary matrix in compressed sparse row layout. Only the positions of the
/// ones are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseBinaryMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl SparseBinaryMatrix {
    /// Builds from raw CSR arrays, checking that every row is strictly
    /// increasing and in range.
    pub fn new(rows: usize, cols: usize, indptr: Vec<usize>, indices: Vec<u32>) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 || indptr[rows] != indices.len() {
            return Err(Error::validation("malformed CSR row pointer"));
        }
        if cols > u32::MAX as usize {
            return Err(Error::validation("column count exceeds u32 range"));
        }
        for r in 0..rows {
            if indptr[r] > indptr[r + 1] {
                return Err(Error::validation(format!(
                    "row pointer decreases at row {r}"
                )));
            }
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "column indices of row {r} are not strictly increasing"
                )));
            }
            if row.last().is_some_and(|&c| c as usize >= cols) {
                return Err(Error::validation(format!(
                    "row {r} has a column index out of range (cols = {cols})"
                )));
            }
        }
        Ok(SparseBinaryMatrix {
            rows,
            cols,
            indptr,
            indices,
        })
    }

    /// Builds from per-row column lists; each list is sorted and deduplicated.
    pub fn from_rows<I, R>(cols: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = usize>,
    {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        for row in rows {
            let mut row: Vec<usize> = row.into_iter().collect();
            row.sort_unstable();
            row.dedup();
            if let Some(&c) = row.last() {
                if c >= cols {
                    return Err(Error::validation(format!(
                        "column index {c} out of range (cols = {cols})"
                    )));
                }
            }
            indices.extend(row.into_iter().map(|c| c as u32));
            indptr.push(indices.len());
        }
        let nrows = indptr.len() - 1;
        Self::new(nrows, cols, indptr, indices)
    }

    /// Binary pattern of a dense matrix (nonzero entries become ones).
    pub fn from_dense_pattern(m: &DenseMatrix) -> Self {
        let rows = (0..m.rows()).map(|i| {
            m.row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, _)| j)
                .collect::<Vec<_>>()
        });
        Self::from_rows(m.cols(), rows).expect("dense pattern is always valid")
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
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn row_lengths(&self) -> Vec<usize> {
        self.indptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Number of ones per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &c in &self.indices {
            counts[c as usize] += 1;
        }
        counts
    }

    /// New matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseBinaryMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for &r in rows {
            indices.extend_from_slice(self.row(r));
            indptr.push(indices.len());
        }
        SparseBinaryMatrix {
            rows: rows.len(),
            cols: self.cols,
            indptr,
            indices,
        }
    }

    /// Appends `extra` empty rows.
    pub fn with_empty_rows(&self, extra: usize) -> SparseBinaryMatrix {
        let mut out = self.clone();
        out.rows += extra;
        out.indptr
            .extend(std::iter::repeat_n(self.indices.len(), extra));
        out
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for &j in self.row(i) {
                out.set(i, j as usize, 1.0);
            }
        }
        out
    }

    /// `self · rhs` for a dense right-hand side.
    pub fn matmul_dense(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, rhs.rows());
        let p = rhs.cols();
        let mut out = DenseMatrix::zeros(self.rows, p);
        for i in 0..self.rows {
            let out_row = out.row_mut(i);
            for &k in self.row(i) {
                super::dense::axpy(1.0, rhs.row(k as usize), out_row);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_rows_dedups_and_sorts() {
        let m = SparseBinaryMatrix::from_rows(3, vec![vec![2, 0, 2], vec![]]).unwrap();
        assert_eq!(m.row(0), &[0, 2]);
        assert_eq!(m.row(1), &[] as &[u32]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.column_counts(), vec![1, 0, 1]);
    }

    #[test]
    fn new_rejects_unsorted_and_out_of_range() {
        assert!(SparseBinaryMatrix::new(1, 3, vec![0, 2], vec![2, 1]).is_err());
        assert!(SparseBinaryMatrix::new(1, 3, vec![0, 2], vec![1, 1]).is_err());
        assert!(SparseBinaryMatrix::new(1, 3, vec![0, 1], vec![3]).is_err());
        assert!(SparseBinaryMatrix::from_rows(2, vec![vec![5]]).is_err());
    }

    #[test]
    fn empty_rows_and_selection() {
        let m = SparseBinaryMatrix::from_rows(2, vec![vec![0], vec![1]]).unwrap();
        let padded = m.with_empty_rows(3);
        assert_eq!(padded.rows(), 5);
        assert_eq!(padded.nnz(), 2);
        assert_eq!(padded.row(4), &[] as &[u32]);
        let picked = m.select_rows(&[1, 1, 0]);
        assert_eq!(picked.row(0), &[1]);
        assert_eq!(picked.row(2), &[0]);
    }

    #[test]
    fn sparse_dense_product() {
        let x = SparseBinaryMatrix::from_rows(2, vec![vec![0, 1], vec![1]]).unwrap();
        let d = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(x.matmul_dense(&d).as_slice(), &[4.0, 6.0, 3.0, 4.0]);
    }
}

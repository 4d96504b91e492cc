//! Compressed sparse row storage.
//!
//! Indices are 0-based. Within each row the column indices are strictly
//! increasing, so a row can be binary-searched and two matrices with the same
//! entries always have the same arrays.

use serde::{Deserialize, Serialize};

use super::SparseError;

/// Sparse matrix in CSR layout (`values` = AA, `col_idx` = JA, `row_ptr` = IA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn try_new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SparseError> {
        let m = CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from `(row, col, value)` triplets.
    ///
    /// Duplicate coordinates are summed in input order, which makes assembly
    /// from element contributions deterministic.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            if i >= n_rows || j >= n_cols {
                return Err(SparseError::IndexOutOfBounds {
                    row: i,
                    col: j,
                    n_rows,
                    n_cols,
                });
            }
        }
        // stable: equal coordinates keep their input order
        entries.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Converts from 1-based CSR arrays as printed in textbooks.
    pub fn from_one_based(
        n_rows: usize,
        n_cols: usize,
        ia: &[usize],
        ja: &[usize],
        aa: &[f64],
    ) -> Result<Self, SparseError> {
        let shift = |v: usize| {
            v.checked_sub(1)
                .ok_or_else(|| SparseError::InvalidStructure("1-based index 0".into()))
        };
        let row_ptr = ia.iter().map(|&v| shift(v)).collect::<Result<Vec<_>, _>>()?;
        let col_idx = ja.iter().map(|&v| shift(v)).collect::<Result<Vec<_>, _>>()?;
        Self::try_new(n_rows, n_cols, row_ptr, col_idx, aa.to_vec())
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a CSR matrix from a dense row-major array, keeping only nonzeros.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Result<Self, SparseError> {
        if dense.len() != n_rows * n_cols {
            return Err(SparseError::DimensionMismatch {
                expected: n_rows * n_cols,
                found: dense.len(),
            });
        }
        let triplets = (0..n_rows).flat_map(|i| {
            (0..n_cols).filter_map(move |j| {
                let v = dense[i * n_cols + j];
                (v != 0.0).then_some((i, j, v))
            })
        });
        Self::from_triplets(n_rows, n_cols, triplets)
    }

    pub fn validate(&self) -> Result<(), SparseError> {
        let bad = |msg: String| Err(SparseError::InvalidStructure(msg));
        if self.row_ptr.len() != self.n_rows + 1 {
            return bad(format!(
                "row_ptr has length {}, expected {}",
                self.row_ptr.len(),
                self.n_rows + 1
            ));
        }
        if self.row_ptr[0] != 0 {
            return bad("row_ptr[0] must be 0".into());
        }
        if self.col_idx.len() != self.values.len() {
            return bad("col_idx and values differ in length".into());
        }
        if self.row_ptr[self.n_rows] != self.col_idx.len() {
            return bad(format!(
                "row_ptr[n_rows] = {} but nnz = {}",
                self.row_ptr[self.n_rows],
                self.col_idx.len()
            ));
        }
        for i in 0..self.n_rows {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            if lo > hi {
                return bad(format!("row_ptr decreases at row {i}"));
            }
            let cols = &self.col_idx[lo..hi];
            if let Some(&c) = cols.iter().find(|&&c| c >= self.n_cols) {
                return bad(format!("column {c} out of range in row {i}"));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns not strictly increasing in row {i}"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows).map(|i| self.row_nnz(i)).max().unwrap_or(0)
    }

    /// Stored value at `(i, j)`, or `None` if the entry is structurally absent.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    /// Iterates over all stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.triplets() {
            let k = next[j];
            col_idx[k] = i;
            values[k] = v;
            next[j] += 1;
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Copies rows `[begin, end)` into a new matrix with the same column space.
    pub fn row_band(&self, begin: usize, end: usize) -> CsrMatrix {
        assert!(begin <= end && end <= self.n_rows);
        let (lo, hi) = (self.row_ptr[begin], self.row_ptr[end]);
        CsrMatrix {
            n_rows: end - begin,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr[begin..=end].iter().map(|&p| p - lo).collect(),
            col_idx: self.col_idx[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        }
    }

    /// Stacks matrices with a common column count on top of each other.
    pub fn vstack(blocks: &[CsrMatrix]) -> Result<CsrMatrix, SparseError> {
        let n_cols = blocks.first().map_or(0, |b| b.n_cols);
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for b in blocks {
            if b.n_cols != n_cols {
                return Err(SparseError::DimensionMismatch {
                    expected: n_cols,
                    found: b.n_cols,
                });
            }
            let base = col_idx.len();
            row_ptr.extend(b.row_ptr[1..].iter().map(|&p| p + base));
            col_idx.extend_from_slice(&b.col_idx);
            values.extend_from_slice(&b.values);
        }
        Ok(CsrMatrix {
            n_rows: row_ptr.len() - 1,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Exact structural and value symmetry check.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.transpose() == *self
    }

    /// Row-major dense copy; meant for small matrices in tests and oracles.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows * self.n_cols];
        for (i, j, v) in self.triplets() {
            d[i * self.n_cols + j] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = CsrMatrix::from_triplets(2, 3, [(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (0, 1, 0.5)])
            .unwrap();
        assert_eq!(a.row_ptr(), &[0, 1, 3]);
        assert_eq!(a.col_idx(), &[1, 0, 2]);
        assert_eq!(a.values(), &[2.5, 3.0, 1.0]);
        a.validate().unwrap();
    }

    #[test]
    fn rejects_unsorted_rows() {
        let err = CsrMatrix::try_new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(matches!(err, Err(SparseError::InvalidStructure(_))));
    }

    #[test]
    fn rejects_bad_row_ptr() {
        assert!(CsrMatrix::try_new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::try_new(1, 2, vec![1, 1], vec![], vec![]).is_err());
        assert!(CsrMatrix::try_new(1, 2, vec![0, 1], vec![5], vec![1.0]).is_err());
    }

    #[test]
    fn out_of_bounds_triplet() {
        let err = CsrMatrix::from_triplets(2, 2, [(2, 0, 1.0)]);
        assert!(matches!(err, Err(SparseError::IndexOutOfBounds { row: 2, .. })));
    }

    #[test]
    fn band_and_vstack_roundtrip() {
        let a = CsrMatrix::from_dense(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 4.0, 5.0]).unwrap();
        let top = a.row_band(0, 1);
        let rest = a.row_band(1, 3);
        assert_eq!(rest.row_nnz(0), 0);
        assert_eq!(CsrMatrix::vstack(&[top, rest]).unwrap(), a);
    }

    #[test]
    fn transpose_twice_is_identity() {
        let a = CsrMatrix::from_dense(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        let t = a.transpose();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.get(2, 0), Some(2.0));
        assert_eq!(t.transpose(), a);
    }
}

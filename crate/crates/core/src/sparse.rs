//! Column-compressed storage for the sparse coefficient factor.

use crate::{Error, Mat, Result};

/// A `rows x cols` matrix stored column by column.
///
/// Column `j` owns `row_idx[col_ptr[j]..col_ptr[j + 1]]` and the matching
/// `values`, with row indices strictly increasing inside each column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    rows: usize,
    cols: usize,
    col_ptr: Vec<u64>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseColumns {
    /// Builds from raw arrays, checking every structural invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        col_ptr: Vec<u64>,
        row_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |why: String| Err(Error::InvalidArgument(format!("sparse columns: {why}")));
        if rows > u32::MAX as usize + 1 {
            return bad(format!("{rows} rows overflow the 32-bit row index space"));
        }
        if col_ptr.len() != cols + 1 {
            return bad(format!(
                "col_ptr has {} entries, expected {}",
                col_ptr.len(),
                cols + 1
            ));
        }
        if col_ptr[0] != 0 {
            return bad("col_ptr[0] must be 0".into());
        }
        if row_idx.len() != values.len() {
            return bad("row_idx and values lengths differ".into());
        }
        if col_ptr[cols] != row_idx.len() as u64 {
            return bad(format!(
                "col_ptr[{cols}] = {} but nnz = {}",
                col_ptr[cols],
                row_idx.len()
            ));
        }
        for j in 0..cols {
            let (a, b) = (col_ptr[j], col_ptr[j + 1]);
            if b < a {
                return bad(format!("col_ptr decreases at column {j}"));
            }
            if b as usize > row_idx.len() {
                return bad(format!("col_ptr[{}] = {b} exceeds nnz", j + 1));
            }
            let col = &row_idx[a as usize..b as usize];
            for (n, &r) in col.iter().enumerate() {
                if r as usize >= rows {
                    return bad(format!("row index {r} out of range in column {j}"));
                }
                if n > 0 && col[n - 1] >= r {
                    return bad(format!("row indices not strictly increasing in column {j}"));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Keeps every entry of `dense` where `mask(i, j)` holds, zeros included.
    pub fn from_dense_masked(dense: &Mat, mut mask: impl FnMut(usize, usize) -> bool) -> Self {
        let (rows, cols) = dense.shape();
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..cols {
            for i in 0..rows {
                if mask(i, j) {
                    row_idx.push(i as u32);
                    values.push(dense[(i, j)]);
                }
            }
            col_ptr.push(row_idx.len() as u64);
        }
        Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            col_ptr: vec![0; cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[u64] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[u32] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(row, value)` pairs of column `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.col_ptr[j] as usize, self.col_ptr[j + 1] as usize);
        self.row_idx[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&r, &v)| (r as usize, v))
    }

    /// Per-row flag: does the row hold at least one stored entry.
    pub fn active_rows(&self) -> Vec<bool> {
        let mut active = vec![false; self.rows];
        for &r in &self.row_idx {
            active[r as usize] = true;
        }
        active
    }

    /// Number of rows with at least one stored entry.
    pub fn k_active(&self) -> usize {
        self.active_rows().into_iter().filter(|&a| a).count()
    }

    pub fn to_dense(&self) -> Mat {
        let mut m = Mat::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            for (i, v) in self.column(j) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `left * self` for a dense `left` with `self.rows()` columns.
    pub fn left_mul(&self, left: &Mat) -> Mat {
        assert_eq!(left.ncols(), self.rows, "left_mul dimension mismatch");
        let mut out = Mat::zeros(left.nrows(), self.cols);
        for j in 0..self.cols {
            let mut dst = out.column_mut(j);
            for (i, v) in self.column(j) {
                dst.axpy(v, &left.column(i), 1.0);
            }
        }
        out
    }
}

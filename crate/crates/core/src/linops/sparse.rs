use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::par::{self, Execution, MIN_PARALLEL_LEN};

/// Rows per partial sum in `Zᵀy`. Fixed so the reduction order does not depend
/// on the execution policy.
const TRANSPOSE_CHUNK_ROWS: usize = 2048;

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and every stored
/// value is finite. Explicit zeros are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn try_new(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row offsets have length {}, expected {}",
                indptr.len(),
                rows + 1
            )));
        }
        if indptr[0] != 0 {
            return Err(Error::InvalidStructure("first row offset must be 0".into()));
        }
        if indices.len() != values.len() {
            return Err(Error::InvalidStructure(format!(
                "{} column indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if *indptr.last().unwrap() != indices.len() {
            return Err(Error::InvalidStructure(
                "last row offset must equal nnz".into(),
            ));
        }
        for r in 0..rows {
            let (lo, hi) = (indptr[r], indptr[r + 1]);
            if hi < lo {
                return Err(Error::InvalidStructure(format!(
                    "row offsets decrease at row {r}"
                )));
            }
            let row = &indices[lo..hi];
            if let Some(&c) = row.iter().find(|&&c| c >= cols) {
                return Err(Error::InvalidStructure(format!(
                    "column index {c} out of range in row {r} ({cols} columns)"
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "column indices not strictly increasing in row {r}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidStructure("non-finite value".into()));
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from per-row `(column, value)` lists. Rows are sorted;
    /// duplicate columns within a row are rejected.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self::try_new(nrows, cols, indptr, indices, values)
    }

    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut indptr = Vec::with_capacity(m.nrows() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[(r, c)] = v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    fn policy(&self, exec: Execution) -> Execution {
        if self.nnz() >= MIN_PARALLEL_LEN {
            exec
        } else {
            Execution::Sequential
        }
    }

    /// `Z x`.
    pub fn mul_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.mul_vec_with(x, Execution::default())
    }

    pub fn mul_vec_with(&self, x: &DVector<f64>, exec: Execution) -> Result<DVector<f64>> {
        ensure_dim("sparse matvec", self.cols, x.len())?;
        let xs = x.as_slice();
        let mut out = vec![0.0; self.rows];
        let chunk = (self.rows / 64).max(256);
        par::for_each_chunk_mut(&mut out, chunk, self.policy(exec), |ci, block| {
            let base = ci * chunk;
            for (j, o) in block.iter_mut().enumerate() {
                *o = self.row_dot(base + j, xs);
            }
        });
        Ok(DVector::from_vec(out))
    }

    /// `Zᵀ y`, reduced over fixed row chunks.
    pub fn tr_mul_vec(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.tr_mul_vec_with(y, Execution::default())
    }

    pub fn tr_mul_vec_with(&self, y: &DVector<f64>, exec: Execution) -> Result<DVector<f64>> {
        ensure_dim("sparse transpose matvec", self.rows, y.len())?;
        let ys = y.as_slice();
        let nchunks = self.rows.div_ceil(TRANSPOSE_CHUNK_ROWS).max(1);
        let partials = par::map_indexed(nchunks, self.policy(exec), |ci| {
            let lo = ci * TRANSPOSE_CHUNK_ROWS;
            let hi = (lo + TRANSPOSE_CHUNK_ROWS).min(self.rows);
            let mut acc = vec![0.0; self.cols];
            for r in lo..hi {
                let yr = ys[r];
                if yr == 0.0 {
                    continue;
                }
                let (cols, vals) = self.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    acc[c] += v * yr;
                }
            }
            acc
        });
        let mut out = DVector::zeros(self.cols);
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Dense `ZᵀZ`, one row outer product at a time.
    pub fn gram_dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (a, (&ca, &va)) in cols.iter().zip(vals).enumerate() {
                for (&cb, &vb) in cols[a..].iter().zip(&vals[a..]) {
                    g[(ca, cb)] += va * vb;
                }
            }
        }
        // fill lower triangle
        for c in 0..self.cols {
            for r in (c + 1)..self.cols {
                g[(r, c)] = g[(c, r)];
            }
        }
        g
    }

    /// Dense `Zᵀ W` for two matrices sharing rows.
    pub fn cross_gram_dense(&self, other: &SparseMatrix) -> Result<DMatrix<f64>> {
        ensure_dim("cross gram rows", self.rows, other.rows)?;
        let mut g = DMatrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            for (&i, &x) in ca.iter().zip(va) {
                for (&j, &y) in cb.iter().zip(vb) {
                    g[(i, j)] += x * y;
                }
            }
        }
        Ok(g)
    }

    /// Columns `range` as a new matrix with re-based indices.
    pub fn select_columns(&self, range: Range<usize>) -> Result<SparseMatrix> {
        if range.end > self.cols || range.start > range.end {
            return Err(Error::InvalidArgument(format!(
                "column range {range:?} outside 0..{}",
                self.cols
            )));
        }
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if range.contains(&c) {
                    indices.push(c - range.start);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: range.len(),
            indptr,
            indices,
            values,
        })
    }

    /// `[self, other]` side by side.
    pub fn hstack(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        ensure_dim("hstack rows", self.rows, other.rows)?;
        let mut indptr = Vec::with_capacity(self.rows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for r in 0..self.rows {
            let (ca, va) = self.row(r);
            indices.extend_from_slice(ca);
            values.extend_from_slice(va);
            let (cb, vb) = other.row(r);
            indices.extend(cb.iter().map(|&c| c + self.cols));
            values.extend_from_slice(vb);
            indptr.push(indices.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols + other.cols,
            indptr,
            indices,
            values,
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

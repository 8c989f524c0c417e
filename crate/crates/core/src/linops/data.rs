use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::passes::PassCounter;
use super::sparse::SparseMatrix;
use crate::error::{ensure_dim, Error, Result};
use crate::par::Execution;

/// Rows of a sparse matrix with a per-class mean row subtracted:
/// row `i` is `x_i - m_{class(i)}`. Never materialized.
#[derive(Debug, Clone)]
pub struct ClassCentered {
    x: Arc<SparseMatrix>,
    classes: Arc<Vec<usize>>,
    /// `l × d`, row `k` is the mean of class `k`.
    means: DMatrix<f64>,
}

impl ClassCentered {
    pub fn new(x: Arc<SparseMatrix>, classes: Arc<Vec<usize>>, means: DMatrix<f64>) -> Result<Self> {
        ensure_dim("class assignments", x.nrows(), classes.len())?;
        ensure_dim("class mean columns", x.ncols(), means.ncols())?;
        if let Some(&k) = classes.iter().find(|&&k| k >= means.nrows()) {
            return Err(Error::LabelOutOfRange {
                label: k,
                classes: means.nrows(),
            });
        }
        Ok(Self { x, classes, means })
    }

    pub fn data(&self) -> &SparseMatrix {
        &self.x
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn means(&self) -> &DMatrix<f64> {
        &self.means
    }

    fn apply(&self, v: &DVector<f64>, exec: Execution) -> Result<DVector<f64>> {
        let mut out = self.x.mul_vec_with(v, exec)?;
        let mv = &self.means * v;
        for (o, &k) in out.iter_mut().zip(self.classes.iter()) {
            *o -= mv[k];
        }
        Ok(out)
    }

    fn apply_transpose(&self, u: &DVector<f64>, exec: Execution) -> Result<DVector<f64>> {
        let mut out = self.x.tr_mul_vec_with(u, exec)?;
        let mut per_class = DVector::zeros(self.means.nrows());
        for (&ui, &k) in u.iter().zip(self.classes.iter()) {
            per_class[k] += ui;
        }
        out -= self.means.tr_mul(&per_class);
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = self.x.to_dense();
        for (i, &k) in self.classes.iter().enumerate() {
            for c in 0..d.ncols() {
                d[(i, c)] -= self.means[(k, c)];
            }
        }
        d
    }
}

/// An `n × d` data matrix. Every product with it is one pass over the data.
#[derive(Debug, Clone)]
pub enum DataMatrix {
    Sparse(Arc<SparseMatrix>),
    Dense(Arc<DMatrix<f64>>),
    ClassCentered(Arc<ClassCentered>),
}

impl From<SparseMatrix> for DataMatrix {
    fn from(m: SparseMatrix) -> Self {
        DataMatrix::Sparse(Arc::new(m))
    }
}

impl From<Arc<SparseMatrix>> for DataMatrix {
    fn from(m: Arc<SparseMatrix>) -> Self {
        DataMatrix::Sparse(m)
    }
}

impl From<DMatrix<f64>> for DataMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        DataMatrix::Dense(Arc::new(m))
    }
}

impl DataMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            DataMatrix::Sparse(m) => m.nrows(),
            DataMatrix::Dense(m) => m.nrows(),
            DataMatrix::ClassCentered(m) => m.x.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            DataMatrix::Sparse(m) => m.ncols(),
            DataMatrix::Dense(m) => m.ncols(),
            DataMatrix::ClassCentered(m) => m.x.ncols(),
        }
    }

    /// `Z v`.
    pub fn apply(&self, v: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        ensure_dim("data matvec", self.ncols(), v.len())?;
        passes.record(1);
        let exec = Execution::default();
        match self {
            DataMatrix::Sparse(m) => m.mul_vec_with(v, exec),
            DataMatrix::Dense(m) => Ok(m.as_ref() * v),
            DataMatrix::ClassCentered(m) => m.apply(v, exec),
        }
    }

    /// `Zᵀ u`.
    pub fn apply_transpose(&self, u: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        ensure_dim("data transpose matvec", self.nrows(), u.len())?;
        passes.record(1);
        let exec = Execution::default();
        match self {
            DataMatrix::Sparse(m) => m.tr_mul_vec_with(u, exec),
            DataMatrix::Dense(m) => Ok(m.tr_mul(u)),
            DataMatrix::ClassCentered(m) => m.apply_transpose(u, exec),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            DataMatrix::Sparse(m) => m.to_dense(),
            DataMatrix::Dense(m) => m.as_ref().clone(),
            DataMatrix::ClassCentered(m) => m.to_dense(),
        }
    }

    /// Dense `ZᵀZ`.
    pub fn gram_dense(&self) -> DMatrix<f64> {
        match self {
            DataMatrix::Sparse(m) => m.gram_dense(),
            DataMatrix::Dense(m) => m.tr_mul(m.as_ref()),
            DataMatrix::ClassCentered(c) => {
                // Σ (x_i - m_k)(x_i - m_k)ᵀ = XᵀX - Σ_k (s_k m_kᵀ + m_k s_kᵀ - n_k m_k m_kᵀ)
                // with s_k the sum of the rows in class k.
                let l = c.means.nrows();
                let d = c.x.ncols();
                let mut g = c.x.gram_dense();
                let mut counts = vec![0usize; l];
                let mut sums = DMatrix::<f64>::zeros(l, d);
                for (i, &k) in c.classes.iter().enumerate() {
                    counts[k] += 1;
                    let (cols, vals) = c.x.row(i);
                    for (&col, &v) in cols.iter().zip(vals) {
                        sums[(k, col)] += v;
                    }
                }
                for (k, &nk) in counts.iter().enumerate() {
                    let mk = c.means.row(k).transpose();
                    let sk = sums.row(k).transpose();
                    let cross = &sk * mk.transpose();
                    g -= &cross + cross.transpose();
                    g += (&mk * mk.transpose()) * nk as f64;
                }
                g
            }
        }
    }
}

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::data::DataMatrix;
use super::passes::PassCounter;
use crate::error::{ensure_dim, Error, Result};
use crate::preconditioners::Preconditioner;

/// Matrix-free linear operator.
///
/// Grams are applied as iterated products and never formed, so every apply
/// costs `O(nnz)` of the underlying data.
#[derive(Debug, Clone)]
pub enum LinearOperator {
    Identity(usize),
    Dense(Arc<DMatrix<f64>>),
    /// A raw `n × d` data matrix.
    Data(DataMatrix),
    /// `ZᵀZ + shift·I`; two passes over `Z`.
    Gram { data: DataMatrix, shift: f64 },
    /// `LᵀR` for `L`, `R` sharing rows; one pass over each.
    CrossGram { left: DataMatrix, right: DataMatrix },
    /// `FᵀF` for a small dense factor that is not input data (no passes).
    FactorGram(Arc<DMatrix<f64>>),
    BlockDiagonal(Vec<LinearOperator>),
    /// Applies `M⁻¹` of a preconditioner.
    Inverse(Arc<Preconditioner>),
}

impl LinearOperator {
    pub fn gram(data: impl Into<DataMatrix>, shift: f64) -> Self {
        LinearOperator::Gram {
            data: data.into(),
            shift,
        }
    }

    pub fn cross_gram(left: impl Into<DataMatrix>, right: impl Into<DataMatrix>) -> Result<Self> {
        let (left, right) = (left.into(), right.into());
        ensure_dim("cross gram rows", left.nrows(), right.nrows())?;
        Ok(LinearOperator::CrossGram { left, right })
    }

    pub fn dense(m: DMatrix<f64>) -> Self {
        LinearOperator::Dense(Arc::new(m))
    }

    pub fn nrows(&self) -> usize {
        match self {
            LinearOperator::Identity(d) => *d,
            LinearOperator::Dense(m) => m.nrows(),
            LinearOperator::Data(z) => z.nrows(),
            LinearOperator::Gram { data, .. } => data.ncols(),
            LinearOperator::CrossGram { left, .. } => left.ncols(),
            LinearOperator::FactorGram(f) => f.ncols(),
            LinearOperator::BlockDiagonal(blocks) => blocks.iter().map(|b| b.nrows()).sum(),
            LinearOperator::Inverse(p) => p.dim(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            LinearOperator::Data(z) => z.ncols(),
            LinearOperator::Dense(m) => m.ncols(),
            LinearOperator::CrossGram { right, .. } => right.ncols(),
            LinearOperator::BlockDiagonal(blocks) => blocks.iter().map(|b| b.ncols()).sum(),
            _ => self.nrows(),
        }
    }

    /// Whether the operator is symmetric by construction.
    pub fn is_symmetric(&self) -> bool {
        match self {
            LinearOperator::Identity(_)
            | LinearOperator::Gram { .. }
            | LinearOperator::FactorGram(_)
            | LinearOperator::Inverse(_) => true,
            LinearOperator::Dense(m) => m.is_square() && *m.as_ref() == m.transpose(),
            LinearOperator::Data(_) | LinearOperator::CrossGram { .. } => false,
            LinearOperator::BlockDiagonal(blocks) => blocks.iter().all(|b| b.is_symmetric()),
        }
    }

    /// `A x`, charging data passes to `passes`.
    pub fn apply(&self, x: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        ensure_dim("operator apply", self.ncols(), x.len())?;
        match self {
            LinearOperator::Identity(_) => Ok(x.clone()),
            LinearOperator::Dense(m) => Ok(m.as_ref() * x),
            LinearOperator::Data(z) => z.apply(x, passes),
            LinearOperator::Gram { data, shift } => {
                let zx = data.apply(x, passes)?;
                let mut out = data.apply_transpose(&zx, passes)?;
                if *shift != 0.0 {
                    out.axpy(*shift, x, 1.0);
                }
                Ok(out)
            }
            LinearOperator::CrossGram { left, right } => {
                let rv = right.apply(x, passes)?;
                left.apply_transpose(&rv, passes)
            }
            LinearOperator::FactorGram(f) => Ok(f.tr_mul(&(f.as_ref() * x))),
            LinearOperator::BlockDiagonal(blocks) => {
                let mut out = DVector::zeros(self.nrows());
                let (mut ri, mut ci) = (0, 0);
                for b in blocks {
                    let xb = x.rows(ci, b.ncols()).into_owned();
                    out.rows_mut(ri, b.nrows()).copy_from(&b.apply(&xb, passes)?);
                    ri += b.nrows();
                    ci += b.ncols();
                }
                Ok(out)
            }
            LinearOperator::Inverse(p) => p.apply_inverse(x),
        }
    }

    /// `Aᵀ u`.
    pub fn apply_transpose(&self, u: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        ensure_dim("operator transpose apply", self.nrows(), u.len())?;
        match self {
            LinearOperator::Dense(m) => Ok(m.tr_mul(u)),
            LinearOperator::Data(z) => z.apply_transpose(u, passes),
            LinearOperator::CrossGram { left, right } => {
                let lu = left.apply(u, passes)?;
                right.apply_transpose(&lu, passes)
            }
            LinearOperator::BlockDiagonal(blocks) => {
                let mut out = DVector::zeros(self.ncols());
                let (mut ri, mut ci) = (0, 0);
                for b in blocks {
                    let ub = u.rows(ri, b.nrows()).into_owned();
                    out.rows_mut(ci, b.ncols())
                        .copy_from(&b.apply_transpose(&ub, passes)?);
                    ri += b.nrows();
                    ci += b.ncols();
                }
                Ok(out)
            }
            _ => self.apply(u, passes),
        }
    }

    /// `A x` without cost accounting.
    pub fn matvec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.apply(x, &PassCounter::new())
    }

    /// Dense materialization. Desk-scale diagnostics only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        Ok(match self {
            LinearOperator::Identity(d) => DMatrix::identity(*d, *d),
            LinearOperator::Dense(m) => m.as_ref().clone(),
            LinearOperator::Data(z) => z.to_dense(),
            LinearOperator::Gram { data, shift } => {
                let d = data.ncols();
                data.gram_dense() + DMatrix::identity(d, d) * *shift
            }
            LinearOperator::CrossGram { left, right } => match (left, right) {
                (DataMatrix::Sparse(l), DataMatrix::Sparse(r)) => l.cross_gram_dense(r)?,
                _ => left.to_dense().tr_mul(&right.to_dense()),
            },
            LinearOperator::FactorGram(f) => f.tr_mul(f.as_ref()),
            _ => {
                let (r, c) = (self.nrows(), self.ncols());
                let scratch = PassCounter::new();
                let mut out = DMatrix::zeros(r, c);
                for j in 0..c {
                    let mut e = DVector::zeros(c);
                    e[j] = 1.0;
                    out.set_column(j, &self.apply(&e, &scratch)?);
                }
                out
            }
        })
    }
}

/// `(ZᵀZ + λI) x` as `Zᵀ(Zx) + λx`; exactly two passes over `Z`.
pub fn gram_apply(
    z: &DataMatrix,
    lambda: f64,
    x: &DVector<f64>,
    passes: &PassCounter,
) -> Result<DVector<f64>> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge {lambda} must be >= 0")));
    }
    LinearOperator::Gram {
        data: z.clone(),
        shift: lambda,
    }
    .apply(x, passes)
}

/// `XᵀY v`, or `YᵀX u` when `transpose` is set; one pass over each matrix.
pub fn cross_gram_apply(
    x: &DataMatrix,
    y: &DataMatrix,
    v: &DVector<f64>,
    transpose: bool,
    passes: &PassCounter,
) -> Result<DVector<f64>> {
    ensure_dim("cross gram rows", x.nrows(), y.nrows())?;
    if transpose {
        let xu = x.apply(v, passes)?;
        y.apply_transpose(&xu, passes)
    } else {
        let yv = y.apply(v, passes)?;
        x.apply_transpose(&yv, passes)
    }
}

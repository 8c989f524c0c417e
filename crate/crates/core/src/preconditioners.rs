//! SPD metric operators `M` with cheap `M v` and `M⁻¹ v`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::linops::DataMatrix;

/// Relative pivot size below which a triangular factor counts as singular.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity(usize),
    /// `M = RᵀR` with `R` upper triangular.
    Factored(DMatrix<f64>),
    /// `U(Λ − λ_k I)Uᵀ + (λ_k + λ)I` over the top-`k` eigenpairs.
    DominantSubspace {
        u: DMatrix<f64>,
        eigenvalues: DVector<f64>,
        lambda_k: f64,
        ridge: f64,
    },
    BlockDiagonal(Vec<Preconditioner>),
}

impl Preconditioner {
    /// Sketched Gram `(ZS)ᵀ(ZS) + λI` from a QR factorization of `[ZS; √λ I]`.
    pub fn sketched_gram(zs: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge {lambda} must be >= 0")));
        }
        let (s, d) = zs.shape();
        if d == 0 {
            return Err(Error::InvalidArgument("sketch has no columns".into()));
        }
        let mut stacked = DMatrix::zeros(s + d, d);
        stacked.rows_mut(0, s).copy_from(zs);
        stacked.rows_mut(s, d).fill_diagonal(lambda.sqrt());
        let r = normalize_signs(stacked.qr().r());
        check_rank(&r)?;
        Ok(Preconditioner::Factored(r))
    }

    /// Exact regularized Gram `ZᵀZ + λI`, factored by Cholesky. Desk scale only.
    pub fn exact_gram(z: &DataMatrix, lambda: f64) -> Result<Self> {
        let d = z.ncols();
        Self::dense(z.gram_dense() + DMatrix::identity(d, d) * lambda)
    }

    /// Factored explicit SPD matrix.
    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("dense preconditioner", m.nrows(), m.ncols()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd("non-finite entries".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let chol = sym
            .cholesky()
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        let r = chol.l().transpose();
        check_rank(&r).map_err(|_| Error::NotSpd("numerically singular".into()))?;
        Ok(Preconditioner::Factored(r))
    }

    /// Dominant-subspace preconditioner of `ZᵀZ + λI` keeping the top `k`
    /// eigenpairs of `ZᵀZ`; `λ_k` is the `k`-th largest eigenvalue.
    pub fn dominant_subspace(z: &DataMatrix, lambda: f64, k: usize) -> Result<Self> {
        Self::dominant_subspace_of_gram(&z.gram_dense(), lambda, k)
    }

    pub fn dominant_subspace_of_gram(a: &DMatrix<f64>, lambda: f64, k: usize) -> Result<Self> {
        let d = a.nrows();
        if k == 0 || k >= d {
            return Err(Error::InvalidArgument(format!(
                "rank k = {k} must satisfy 1 <= k < d = {d}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge {lambda} must be >= 0")));
        }
        let (vals, vecs) = sorted_eigen(a)?;
        let lambda_k = vals[k - 1];
        if lambda_k + lambda <= 0.0 {
            return Err(Error::SingularPreconditioner(format!(
                "lambda_k + ridge = {:e}",
                lambda_k + lambda
            )));
        }
        Ok(Preconditioner::DominantSubspace {
            u: vecs.columns(0, k).into_owned(),
            eigenvalues: vals.rows(0, k).into_owned(),
            lambda_k,
            ridge: lambda,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Preconditioner::Identity(d) => *d,
            Preconditioner::Factored(r) => r.nrows(),
            Preconditioner::DominantSubspace { u, .. } => u.nrows(),
            Preconditioner::BlockDiagonal(blocks) => blocks.iter().map(|b| b.dim()).sum(),
        }
    }

    /// Upper-triangular factor `R` with `M = RᵀR`, when stored.
    pub fn factor(&self) -> Option<&DMatrix<f64>> {
        match self {
            Preconditioner::Factored(r) => Some(r),
            _ => None,
        }
    }

    /// `M v`.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("preconditioner apply", self.dim(), v.len())?;
        Ok(match self {
            Preconditioner::Identity(_) => v.clone(),
            Preconditioner::Factored(r) => r.tr_mul(&(r * v)),
            Preconditioner::DominantSubspace {
                u,
                eigenvalues,
                lambda_k,
                ridge,
            } => {
                let mut c = u.tr_mul(v);
                for (ci, &e) in c.iter_mut().zip(eigenvalues.iter()) {
                    *ci *= e - lambda_k;
                }
                u * c + v * (lambda_k + ridge)
            }
            Preconditioner::BlockDiagonal(blocks) => self.blockwise(blocks, v, |b, x| b.apply(x))?,
        })
    }

    /// `M⁻¹ v`.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("preconditioner inverse", self.dim(), v.len())?;
        Ok(match self {
            Preconditioner::Identity(_) => v.clone(),
            Preconditioner::Factored(r) => {
                let y = r
                    .tr_solve_upper_triangular(v)
                    .ok_or_else(|| Error::SingularPreconditioner("zero pivot".into()))?;
                r.solve_upper_triangular(&y)
                    .ok_or_else(|| Error::SingularPreconditioner("zero pivot".into()))?
            }
            Preconditioner::DominantSubspace {
                u,
                eigenvalues,
                lambda_k,
                ridge,
            } => {
                let tail = 1.0 / (lambda_k + ridge);
                let mut c = u.tr_mul(v);
                for (ci, &e) in c.iter_mut().zip(eigenvalues.iter()) {
                    *ci *= 1.0 / (e + ridge) - tail;
                }
                u * c + v * tail
            }
            Preconditioner::BlockDiagonal(blocks) => {
                self.blockwise(blocks, v, |b, x| b.apply_inverse(x))?
            }
        })
    }

    fn blockwise<F>(&self, blocks: &[Preconditioner], v: &DVector<f64>, f: F) -> Result<DVector<f64>>
    where
        F: Fn(&Preconditioner, &DVector<f64>) -> Result<DVector<f64>>,
    {
        let mut out = DVector::zeros(v.len());
        let mut off = 0;
        for b in blocks {
            let n = b.dim();
            let part = f(b, &v.rows(off, n).into_owned())?;
            out.rows_mut(off, n).copy_from(&part);
            off += n;
        }
        Ok(out)
    }

    /// Dense `M`. Desk scale only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Preconditioner::Identity(d) => DMatrix::identity(*d, *d),
            Preconditioner::Factored(r) => r.tr_mul(r),
            Preconditioner::DominantSubspace {
                u,
                eigenvalues,
                lambda_k,
                ridge,
            } => {
                let d = u.nrows();
                let shifted = DMatrix::from_diagonal(&eigenvalues.map(|e| e - lambda_k));
                u * shifted * u.transpose() + DMatrix::identity(d, d) * (lambda_k + ridge)
            }
            Preconditioner::BlockDiagonal(blocks) => {
                let d = self.dim();
                let mut out = DMatrix::zeros(d, d);
                let mut off = 0;
                for b in blocks {
                    let n = b.dim();
                    out.view_mut((off, off), (n, n)).copy_from(&b.to_dense());
                    off += n;
                }
                out
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in descending order.
pub(crate) fn sorted_eigen(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite matrix in eigensolver".into()));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = a.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(d, d);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

fn normalize_signs(mut r: DMatrix<f64>) -> DMatrix<f64> {
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
    r
}

fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let diag = r.diagonal();
    let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(max > 0.0) || !min.is_finite() || min <= RANK_TOL * max {
        return Err(Error::SingularPreconditioner(format!(
            "triangular factor lost rank (min pivot {min:e}, max pivot {max:e}); \
             use a fresh seed, a larger sketch, or a positive ridge"
        )));
    }
    Ok(())
}

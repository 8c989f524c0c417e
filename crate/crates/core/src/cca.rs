//! Top-1 regularized canonical correlation analysis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{Ellipsoid, ProductEllipsoid};
use crate::linops::{DataMatrix, LinearOperator, PassCounter};
use crate::preconditioners::Preconditioner;
use crate::sketching::{pencil_condition_number, CountSketch};
use crate::solvers::{
    self, ConvergenceTrace, PreconditionerKind, QuadraticProblem, QuadraticTerm, SolveOptions,
    SolverConfig, SolverKind, Status,
};

/// Gap below which condition bounds are refused.
const GAP_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CcaProblem {
    x: DataMatrix,
    y: DataMatrix,
    lambda_x: f64,
    lambda_y: f64,
}

#[derive(Debug, Clone)]
pub struct CcaResult {
    pub sigma1: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    /// Empty for the dense oracle.
    pub trace: ConvergenceTrace,
    /// Passes spent building the preconditioner (sketching or forming Grams).
    pub setup_passes: u64,
    /// Passes spent normalizing the starting point.
    pub start_passes: u64,
}

/// Dense solution: all canonical correlations plus the top weights.
#[derive(Debug, Clone)]
pub struct CcaOracle {
    /// Descending.
    pub correlations: DVector<f64>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl CcaOracle {
    pub fn sigma1(&self) -> f64 {
        self.correlations.get(0).copied().unwrap_or(0.0)
    }

    /// Second correlation, zero when there is none.
    pub fn sigma2(&self) -> f64 {
        self.correlations.get(1).copied().unwrap_or(0.0)
    }

    pub fn to_result(&self) -> CcaResult {
        CcaResult {
            sigma1: self.sigma1(),
            u: self.u.clone(),
            v: self.v.clone(),
            trace: ConvergenceTrace::empty(Status::Converged),
            setup_passes: 0,
            start_passes: 0,
        }
    }
}

impl CcaProblem {
    pub fn new(
        x: impl Into<DataMatrix>,
        y: impl Into<DataMatrix>,
        lambda_x: f64,
        lambda_y: f64,
    ) -> Result<Self> {
        let (x, y) = (x.into(), y.into());
        ensure_dim("CCA row count", x.nrows(), y.nrows())?;
        for l in [lambda_x, lambda_y] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("ridge {l} must be >= 0")));
            }
        }
        if x.nrows() == 0 {
            return Err(Error::NoRows);
        }
        if x.ncols() == 0 || y.ncols() == 0 {
            return Err(Error::InvalidArgument("CCA views need at least one column".into()));
        }
        Ok(Self {
            x,
            y,
            lambda_x,
            lambda_y,
        })
    }

    pub fn x(&self) -> &DataMatrix {
        &self.x
    }

    pub fn y(&self) -> &DataMatrix {
        &self.y
    }

    pub fn lambdas(&self) -> (f64, f64) {
        (self.lambda_x, self.lambda_y)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.ncols(), self.y.ncols())
    }

    pub fn sigma_xx(&self) -> LinearOperator {
        LinearOperator::gram(self.x.clone(), self.lambda_x)
    }

    pub fn sigma_yy(&self) -> LinearOperator {
        LinearOperator::gram(self.y.clone(), self.lambda_y)
    }

    /// `Σxy = XᵀY`.
    pub fn sigma_xy(&self) -> LinearOperator {
        LinearOperator::CrossGram {
            left: self.x.clone(),
            right: self.y.clone(),
        }
    }

    /// `Σxyᵀ = YᵀX`.
    pub fn sigma_yx(&self) -> LinearOperator {
        LinearOperator::CrossGram {
            left: self.y.clone(),
            right: self.x.clone(),
        }
    }

    /// Dense `diag(Σxx, Σyy)`. Desk scale only.
    pub fn sigma_dense(&self) -> Result<DMatrix<f64>> {
        let (dx, dy) = self.dims();
        let mut out = DMatrix::zeros(dx + dy, dx + dy);
        out.view_mut((0, 0), (dx, dx))
            .copy_from(&self.sigma_xx().to_dense()?);
        out.view_mut((dx, dx), (dy, dy))
            .copy_from(&self.sigma_yy().to_dense()?);
        Ok(out)
    }

    /// The problem on `S^Σxx × S^Σyy` with metric `diag(m_xx, m_yy)`.
    pub fn quadratic(&self, m_xx: Preconditioner, m_yy: Preconditioner) -> Result<QuadraticProblem> {
        let manifold = ProductEllipsoid::new(vec![
            Ellipsoid::new(self.sigma_xx(), m_xx)?,
            Ellipsoid::new(self.sigma_yy(), m_yy)?,
        ])?;
        QuadraticProblem::new(
            manifold,
            vec![
                QuadraticTerm {
                    row: 0,
                    col: 1,
                    op: self.sigma_xy(),
                },
                QuadraticTerm {
                    row: 1,
                    col: 0,
                    op: self.sigma_yx(),
                },
            ],
            None,
        )
    }

    /// Same problem with a block-diagonal metric given as one preconditioner.
    pub fn quadratic_with_metric(&self, m: &Preconditioner) -> Result<QuadraticProblem> {
        let (dx, dy) = self.dims();
        match m {
            Preconditioner::BlockDiagonal(b) if b.len() == 2 && b[0].dim() == dx => {
                self.quadratic(b[0].clone(), b[1].clone())
            }
            _ => {
                ensure_dim("CCA metric", dx + dy, m.dim())?;
                let dense = m.to_dense();
                let off = dense.view((0, dx), (dx, dy)).amax();
                if off > 0.0 {
                    return Err(Error::InvalidArgument(
                        "CCA metric must be block diagonal".into(),
                    ));
                }
                self.quadratic(
                    Preconditioner::dense(dense.view((0, 0), (dx, dx)).into_owned())?,
                    Preconditioner::dense(dense.view((dx, dx), (dy, dy)).into_owned())?,
                )
            }
        }
    }

    /// `f(z) = −uᵀΣxy v`.
    pub fn objective(&self, z: &DVector<f64>, passes: &PassCounter) -> Result<f64> {
        self.identity_quadratic()?.objective(z, passes)
    }

    /// `∇f̄(z) = −[Σxy v; Σxyᵀ u]`.
    pub fn egrad(&self, z: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        self.identity_quadratic()?.egrad(z, passes)
    }

    /// `∇²f̄ η = −[Σxy η_v; Σxyᵀ η_u]`.
    pub fn ehess(&self, eta: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        self.identity_quadratic()?.ehess_vec(eta, passes)
    }

    fn identity_quadratic(&self) -> Result<QuadraticProblem> {
        let (dx, dy) = self.dims();
        self.quadratic(Preconditioner::Identity(dx), Preconditioner::Identity(dy))
    }

    /// Dense oracle from the SVD of `Σxx^{-1/2} Σxy Σyy^{-1/2}`.
    pub fn exact(&self) -> Result<CcaOracle> {
        let sxy = self.sigma_xy().to_dense()?;
        cca_oracle(
            &self.sigma_xx().to_dense()?,
            &self.sigma_yy().to_dense()?,
            &sxy,
        )
    }

    /// Builds the metric for `kind`, charging data passes to `passes`.
    /// Returns the sketches when a CountSketch was drawn.
    #[allow(clippy::type_complexity)]
    fn build_metric(
        &self,
        kind: PreconditionerKind,
        seed: u64,
        passes: &PassCounter,
    ) -> Result<(Preconditioner, Preconditioner, Option<(DMatrix<f64>, DMatrix<f64>)>)> {
        let (dx, dy) = self.dims();
        Ok(match kind {
            PreconditionerKind::Identity => {
                (Preconditioner::Identity(dx), Preconditioner::Identity(dy), None)
            }
            PreconditionerKind::Exact => {
                passes.record(2);
                (
                    Preconditioner::exact_gram(&self.x, self.lambda_x)?,
                    Preconditioner::exact_gram(&self.y, self.lambda_y)?,
                    None,
                )
            }
            PreconditionerKind::Dominant { k } => {
                passes.record(2);
                (
                    Preconditioner::dominant_subspace(&self.x, self.lambda_x, k.min(dx - 1).max(1))
                        .or_else(|e| if dx == 1 { Preconditioner::exact_gram(&self.x, self.lambda_x) } else { Err(e) })?,
                    Preconditioner::dominant_subspace(&self.y, self.lambda_y, k.min(dy - 1).max(1))
                        .or_else(|e| if dy == 1 { Preconditioner::exact_gram(&self.y, self.lambda_y) } else { Err(e) })?,
                    None,
                )
            }
            PreconditionerKind::CountSketch { s } => {
                let sketch = CountSketch::new(self.x.nrows(), s, seed)?;
                return self.sketched_metric(&sketch, passes);
            }
        })
    }

    #[allow(clippy::type_complexity)]
    fn sketched_metric(
        &self,
        sketch: &CountSketch,
        passes: &PassCounter,
    ) -> Result<(Preconditioner, Preconditioner, Option<(DMatrix<f64>, DMatrix<f64>)>)> {
        let (dx, dy) = self.dims();
        let s = sketch.sketch_dim();
        if s < dx.max(dy) {
            return Err(Error::InvalidArgument(format!(
                "sketch size {s} must be at least max(d_x, d_y) = {}",
                dx.max(dy)
            )));
        }
        let xs = sketch.apply(&self.x, passes)?;
        let ys = sketch.apply(&self.y, passes)?;
        Ok((
            Preconditioner::sketched_gram(&xs, self.lambda_x)?,
            Preconditioner::sketched_gram(&ys, self.lambda_y)?,
            Some((xs, ys)),
        ))
    }

    /// Solves with the metric and start chosen by `opts`.
    pub fn solve(&self, opts: &SolveOptions) -> Result<CcaResult> {
        let setup = PassCounter::new();
        let (mxx, myy, sketches) = self.build_metric(opts.preconditioner, opts.seed, &setup)?;
        self.finish(mxx, myy, sketches, opts, setup.get())
    }

    /// Sketched run with a caller-supplied sketch.
    pub fn solve_with_sketch(
        &self,
        sketch: &CountSketch,
        solver: SolverKind,
        config: &SolverConfig,
    ) -> Result<CcaResult> {
        let setup = PassCounter::new();
        let (mxx, myy, sketches) = self.sketched_metric(sketch, &setup)?;
        let opts = SolveOptions {
            preconditioner: PreconditionerKind::CountSketch {
                s: sketch.sketch_dim(),
            },
            solver,
            seed: sketch.seed().unwrap_or(0),
            warm_start: true,
            config: *config,
        };
        self.finish(mxx, myy, sketches, &opts, setup.get())
    }

    fn finish(
        &self,
        mxx: Preconditioner,
        myy: Preconditioner,
        sketches: Option<(DMatrix<f64>, DMatrix<f64>)>,
        opts: &SolveOptions,
        setup_passes: u64,
    ) -> Result<CcaResult> {
        let (dx, dy) = self.dims();
        let problem = self.quadratic(mxx, myy)?;
        let raw_start = match (&sketches, opts.warm_start) {
            (Some((xs, ys)), true) => {
                let oracle = cca_oracle(
                    &(xs.tr_mul(xs) + DMatrix::identity(dx, dx) * self.lambda_x),
                    &(ys.tr_mul(ys) + DMatrix::identity(dy, dy) * self.lambda_y),
                    &xs.tr_mul(ys),
                )
                .map_err(|e| match e {
                    Error::NotSpd(m) => Error::SingularPreconditioner(format!(
                        "sketched Gram is singular ({m}); use a fresh seed, a larger sketch, or a positive ridge"
                    )),
                    e => e,
                })?;
                stack(&oracle.u, &oracle.v)
            }
            _ => solvers::random_start(dx + dy, opts.seed),
        };
        let start = PassCounter::new();
        let z0 = problem.manifold().normalize(&raw_start, &start)?.into_vector();
        let out = solvers::solve(opts.solver, &problem, z0, &opts.config)?;
        let scratch = PassCounter::new();
        let (u, v) = canonical_signs(out.x.rows(0, dx).into_owned(), out.x.rows(dx, dy).into_owned());
        let sigma1 = -self.objective(&stack(&u, &v), &scratch)?;
        Ok(CcaResult {
            sigma1,
            u,
            v,
            trace: out.trace,
            setup_passes,
            start_passes: start.get(),
        })
    }

    /// `2σ₁/(σ₁−σ₂) · κ(Σ, M)` for a block-diagonal metric `M`.
    pub fn condition_bound(&self, oracle: &CcaOracle, m: &Preconditioner) -> Result<f64> {
        let (s1, s2) = (oracle.sigma1(), oracle.sigma2());
        if !(s1 - s2 > GAP_GUARD) {
            return Err(Error::DegenerateGap(s1 - s2));
        }
        let kappa = pencil_condition_number(&self.sigma_dense()?, &m.to_dense())?;
        Ok(2.0 * s1 / (s1 - s2) * kappa)
    }
}

fn stack(u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(u.len() + v.len());
    z.rows_mut(0, u.len()).copy_from(u);
    z.rows_mut(u.len(), v.len()).copy_from(v);
    z
}

/// Flips `(u, v)` jointly so the first nonzero entry of `u` is positive.
fn canonical_signs(u: DVector<f64>, v: DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let tol = 1e-12 * u.amax();
    match u.iter().find(|a| a.abs() > tol) {
        Some(&a) if a < 0.0 => (-u, -v),
        _ => (u, v),
    }
}

/// `Σ^{-1/2}` through a symmetric eigendecomposition.
fn inv_sqrt(s: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-13 * max.max(f64::MIN_POSITIVE))) {
        return Err(Error::NotSpd(format!(
            "{name} is singular; a positive ridge is required"
        )));
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Dense CCA from explicit `Σxx`, `Σyy`, `Σxy`.
pub fn cca_oracle(sxx: &DMatrix<f64>, syy: &DMatrix<f64>, sxy: &DMatrix<f64>) -> Result<CcaOracle> {
    let (dx, dy) = (sxx.nrows(), syy.nrows());
    ensure_dim("Σxy rows", dx, sxy.nrows())?;
    ensure_dim("Σxy cols", dy, sxy.ncols())?;
    let wx = inv_sqrt(sxx, "Σxx")?;
    let wy = inv_sqrt(syy, "Σyy")?;
    let r = &wx * sxy * &wy;
    let svd = r.svd(true, true);
    let (uu, vt) = (
        svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?,
        svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?,
    );
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order[0];
    let correlations =
        DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    let u = &wx * uu.column(top);
    let v = &wy * vt.row(top).transpose();
    let (u, v) = canonical_signs(u, v);
    Ok(CcaOracle { correlations, u, v })
}

/// Dense CCA of `X`, `Y` with ridges.
pub fn exact_cca(
    x: impl Into<DataMatrix>,
    y: impl Into<DataMatrix>,
    lambda_x: f64,
    lambda_y: f64,
) -> Result<CcaResult> {
    Ok(CcaProblem::new(x, y, lambda_x, lambda_y)?.exact()?.to_result())
}

/// CountSketch preconditioner, sketched warm start, then RCG.
pub fn sketched_cca(
    x: impl Into<DataMatrix>,
    y: impl Into<DataMatrix>,
    lambda_x: f64,
    lambda_y: f64,
    s: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<CcaResult> {
    CcaProblem::new(x, y, lambda_x, lambda_y)?.solve(&SolveOptions {
        preconditioner: PreconditionerKind::CountSketch { s },
        solver: SolverKind::Rcg,
        seed,
        warm_start: true,
        config: *config,
    })
}

/// Hessian condition bound `2σ₁/(σ₁−σ₂) · κ(Σ, M)`, computing the oracle internally.
pub fn cca_condition_bound(p: &CcaProblem, m: &Preconditioner) -> Result<f64> {
    p.condition_bound(&p.exact()?, m)
}

/// Metric `diag(M_xx, M_yy)` as a single preconditioner.
pub fn block_metric(m_xx: Preconditioner, m_yy: Preconditioner) -> Arc<Preconditioner> {
    Arc::new(Preconditioner::BlockDiagonal(vec![m_xx, m_yy]))
}

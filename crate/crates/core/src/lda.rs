//! Top-1 regularized linear discriminant analysis.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{Ellipsoid, ProductEllipsoid};
use crate::linops::{ClassCentered, DataMatrix, LinearOperator, PassCounter, SparseMatrix};
use crate::preconditioners::Preconditioner;
use crate::sketching::{pencil_condition_number, CountSketch};
use crate::solvers::{
    self, ConvergenceTrace, PreconditionerKind, QuadraticProblem, QuadraticTerm, SolveOptions,
    SolverConfig, SolverKind, Status,
};

const GAP_GUARD: f64 = 1e-12;

/// Per-class counts and means, classes indexed `0..l`.
#[derive(Debug, Clone)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    /// `l × d`, row `k` is `m_k`.
    pub means: DMatrix<f64>,
    pub global_mean: DVector<f64>,
}

impl ClassStats {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }
}

/// Maps arbitrary label values to `0..l` in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    values: Vec<i64>,
}

impl LabelMap {
    pub fn fit(labels: &[i64]) -> (Self, Vec<usize>) {
        let mut index = BTreeMap::new();
        for &l in labels {
            index.entry(l).or_insert(0usize);
        }
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        let classes = labels.iter().map(|l| index[l]).collect();
        (
            Self {
                values: index.into_keys().collect(),
            },
            classes,
        )
    }

    /// Original label value of class `k`.
    pub fn label(&self, k: usize) -> i64 {
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Builds `X̂` (rows `x_i − m_{y_i}`), `Ŷ` (rows `√n_k (m_k − m)`) and the
/// class statistics. Reads `X` once.
pub fn scatter_operators(
    x: Arc<SparseMatrix>,
    classes: Arc<Vec<usize>>,
    l: usize,
    passes: &PassCounter,
) -> Result<(ClassCentered, DMatrix<f64>, ClassStats)> {
    ensure_dim("labels", x.nrows(), classes.len())?;
    if x.nrows() == 0 {
        return Err(Error::NoRows);
    }
    let d = x.ncols();
    let mut counts = vec![0usize; l];
    let mut sums = DMatrix::zeros(l, d);
    for (i, &k) in classes.iter().enumerate() {
        if k >= l {
            return Err(Error::LabelOutOfRange { label: k, classes: l });
        }
        counts[k] += 1;
        let (idx, vals) = x.row(i);
        for (&j, &v) in idx.iter().zip(vals) {
            sums[(k, j)] += v;
        }
    }
    passes.record(1);
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(k));
    }
    let n = x.nrows() as f64;
    let global_mean = sums.row_sum().transpose() / n;
    let mut means = sums;
    for (k, mut row) in means.row_iter_mut().enumerate() {
        row /= counts[k] as f64;
    }
    let mut yhat = DMatrix::zeros(l, d);
    for k in 0..l {
        let diff = means.row(k) - global_mean.transpose();
        yhat.set_row(k, &(diff * (counts[k] as f64).sqrt()));
    }
    let xhat = ClassCentered::new(x, classes, means.clone())?;
    Ok((
        xhat,
        yhat,
        ClassStats {
            counts,
            means,
            global_mean,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct LdaProblem {
    xhat: DataMatrix,
    yhat: Arc<DMatrix<f64>>,
    stats: ClassStats,
    lambda: f64,
    build_passes: u64,
}

#[derive(Debug, Clone)]
pub struct LdaResult {
    pub rho1: f64,
    pub w: DVector<f64>,
    pub trace: ConvergenceTrace,
    /// Set by the oracle when `S_B = 0` and every feasible `w` is optimal.
    pub degenerate: bool,
    pub setup_passes: u64,
    pub start_passes: u64,
}

/// Dense solution of the pencil `(S_B, S_w + λI)`.
#[derive(Debug, Clone)]
pub struct LdaOracle {
    /// Descending.
    pub eigenvalues: DVector<f64>,
    pub w: DVector<f64>,
    /// `S_B` vanishes to rounding, so every feasible `w` is optimal.
    pub degenerate: bool,
}

impl LdaOracle {
    pub fn rho1(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn rho2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(0.0)
    }

    pub fn to_result(&self) -> LdaResult {
        LdaResult {
            rho1: self.rho1(),
            w: self.w.clone(),
            trace: ConvergenceTrace::empty(Status::Converged),
            degenerate: self.degenerate,
            setup_passes: 0,
            start_passes: 0,
        }
    }
}

impl LdaProblem {
    /// Labels may take any values; they are re-indexed in increasing order.
    pub fn new(x: SparseMatrix, labels: &[i64], lambda: f64) -> Result<Self> {
        let (map, classes) = LabelMap::fit(labels);
        Self::with_classes(x, classes, map.len(), lambda)
    }

    /// `classes[i] ∈ 0..l`.
    pub fn with_classes(x: SparseMatrix, classes: Vec<usize>, l: usize, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("ridge {lambda} must be >= 0")));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidArgument("LDA needs at least one column".into()));
        }
        let passes = PassCounter::new();
        let (xhat, yhat, stats) = scatter_operators(Arc::new(x), Arc::new(classes), l, &passes)?;
        Ok(Self {
            xhat: DataMatrix::ClassCentered(Arc::new(xhat)),
            yhat: Arc::new(yhat),
            stats,
            lambda,
            build_passes: passes.get(),
        })
    }

    pub fn dim(&self) -> usize {
        self.xhat.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn stats(&self) -> &ClassStats {
        &self.stats
    }

    /// `X̂` as an implicit operator.
    pub fn xhat(&self) -> &DataMatrix {
        &self.xhat
    }

    /// `Ŷ`, `l × d`.
    pub fn yhat(&self) -> &DMatrix<f64> {
        &self.yhat
    }

    /// Passes spent computing class statistics.
    pub fn build_passes(&self) -> u64 {
        self.build_passes
    }

    /// `S_w + λI`.
    pub fn constraint(&self) -> LinearOperator {
        LinearOperator::gram(self.xhat.clone(), self.lambda)
    }

    /// `S_B = ŶᵀŶ`, applied without touching the data.
    pub fn between(&self) -> LinearOperator {
        LinearOperator::FactorGram(self.yhat.clone())
    }

    pub fn within_dense(&self) -> DMatrix<f64> {
        self.xhat.gram_dense()
    }

    pub fn between_dense(&self) -> DMatrix<f64> {
        self.yhat.tr_mul(&self.yhat)
    }

    pub fn constraint_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.within_dense() + DMatrix::identity(d, d) * self.lambda
    }

    pub fn quadratic(&self, m: Preconditioner) -> Result<QuadraticProblem> {
        QuadraticProblem::new(
            ProductEllipsoid::single(Ellipsoid::new(self.constraint(), m)?),
            vec![QuadraticTerm {
                row: 0,
                col: 0,
                op: self.between(),
            }],
            None,
        )
    }

    /// `f(w) = −½ wᵀS_B w`.
    pub fn objective(&self, w: &DVector<f64>) -> Result<f64> {
        self.identity_quadratic()?.objective(w, &PassCounter::new())
    }

    /// `∇f̄(w) = −S_B w`.
    pub fn egrad(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.identity_quadratic()?.egrad(w, &PassCounter::new())
    }

    /// `∇²f̄ η = −S_B η`.
    pub fn ehess(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        self.identity_quadratic()?.ehess_vec(eta, &PassCounter::new())
    }

    fn identity_quadratic(&self) -> Result<QuadraticProblem> {
        self.quadratic(Preconditioner::Identity(self.dim()))
    }

    /// Dense oracle: leading eigenpair of `(S_w + λI)⁻¹ S_B` via a Cholesky
    /// reduction to a symmetric problem.
    pub fn exact(&self) -> Result<LdaOracle> {
        let c = self.constraint_dense();
        let r = Preconditioner::dense(c).map_err(|_| {
            Error::NotSpd("S_w + λI is singular; a positive ridge is required".into())
        })?;
        let mut oracle = leading_pair(&self.between_dense(), &r)?;
        let moment: f64 = (0..self.stats.classes())
            .map(|k| self.stats.counts[k] as f64 * self.stats.means.row(k).norm_squared())
            .sum();
        oracle.degenerate = self.yhat.norm_squared() <= 1e-24 * moment;
        Ok(oracle)
    }

    fn build_metric(
        &self,
        kind: PreconditionerKind,
        seed: u64,
        passes: &PassCounter,
    ) -> Result<(Preconditioner, bool)> {
        let d = self.dim();
        Ok(match kind {
            PreconditionerKind::Identity => (Preconditioner::Identity(d), false),
            PreconditionerKind::Exact => {
                passes.record(1);
                (Preconditioner::exact_gram(&self.xhat, self.lambda)?, false)
            }
            PreconditionerKind::Dominant { k } => {
                passes.record(1);
                let m = if d == 1 {
                    Preconditioner::exact_gram(&self.xhat, self.lambda)?
                } else {
                    Preconditioner::dominant_subspace(&self.xhat, self.lambda, k.clamp(1, d - 1))?
                };
                (m, false)
            }
            PreconditionerKind::CountSketch { s } => {
                let sketch = CountSketch::new(self.xhat.nrows(), s, seed)?;
                (self.sketched_metric(&sketch, passes)?, true)
            }
        })
    }

    fn sketched_metric(&self, sketch: &CountSketch, passes: &PassCounter) -> Result<Preconditioner> {
        let d = self.dim();
        if sketch.sketch_dim() < d {
            return Err(Error::InvalidArgument(format!(
                "sketch size {} must be at least d = {d}",
                sketch.sketch_dim()
            )));
        }
        let xs = sketch.apply(&self.xhat, passes)?;
        Preconditioner::sketched_gram(&xs, self.lambda)
    }

    pub fn solve(&self, opts: &SolveOptions) -> Result<LdaResult> {
        let setup = PassCounter::new();
        let (m, sketched) = self.build_metric(opts.preconditioner, opts.seed, &setup)?;
        self.finish(m, sketched, opts, setup.get())
    }

    /// Sketched run with a caller-supplied sketch.
    pub fn solve_with_sketch(
        &self,
        sketch: &CountSketch,
        solver: SolverKind,
        config: &SolverConfig,
    ) -> Result<LdaResult> {
        let setup = PassCounter::new();
        let m = self.sketched_metric(sketch, &setup)?;
        let opts = SolveOptions {
            preconditioner: PreconditionerKind::CountSketch {
                s: sketch.sketch_dim(),
            },
            solver,
            seed: sketch.seed().unwrap_or(0),
            warm_start: true,
            config: *config,
        };
        self.finish(m, true, &opts, setup.get())
    }

    fn finish(
        &self,
        m: Preconditioner,
        sketched: bool,
        opts: &SolveOptions,
        setup_passes: u64,
    ) -> Result<LdaResult> {
        let raw = if sketched && opts.warm_start {
            leading_pair(&self.between_dense(), &m)?.w
        } else {
            solvers::random_start(self.dim(), opts.seed)
        };
        let problem = self.quadratic(m)?;
        let start = PassCounter::new();
        let w0 = problem.manifold().normalize(&raw, &start)?.into_vector();
        let out = solvers::solve(opts.solver, &problem, w0, &opts.config)?;
        let w = canonical_sign(out.x);
        let rho1 = -2.0 * self.objective(&w)?;
        Ok(LdaResult {
            rho1,
            w,
            trace: out.trace,
            degenerate: false,
            setup_passes,
            start_passes: start.get(),
        })
    }

    /// `ρ₁/(ρ₁−ρ₂) · κ(S_w + λI, M)`.
    pub fn condition_bound(&self, oracle: &LdaOracle, m: &Preconditioner) -> Result<f64> {
        let (r1, r2) = (oracle.rho1(), oracle.rho2());
        if !(r1 - r2 > GAP_GUARD) {
            return Err(Error::DegenerateGap(r1 - r2));
        }
        let kappa = pencil_condition_number(&self.constraint_dense(), &m.to_dense())?;
        Ok(r1 / (r1 - r2) * kappa)
    }
}

fn canonical_sign(w: DVector<f64>) -> DVector<f64> {
    let tol = 1e-12 * w.amax();
    match w.iter().find(|a| a.abs() > tol) {
        Some(&a) if a < 0.0 => -w,
        _ => w,
    }
}

/// Leading eigenpair of `(S_B, M)` through `R⁻ᵀ S_B R⁻¹` with `M = RᵀR`.
/// The vector is normalized in `M`.
fn leading_pair(sb: &DMatrix<f64>, m: &Preconditioner) -> Result<LdaOracle> {
    let d = sb.nrows();
    ensure_dim("pencil", d, m.dim())?;
    let r = match m.factor() {
        Some(r) => r.clone(),
        None => Preconditioner::dense(m.to_dense())?
            .factor()
            .cloned()
            .ok_or_else(|| Error::Numerical("metric has no factor".into()))?,
    };
    let rt = r.transpose();
    // R⁻ᵀ S_B R⁻¹ via two triangular solves
    let left = rt
        .solve_lower_triangular(sb)
        .ok_or_else(|| Error::NotSpd("singular metric factor".into()))?;
    let c = rt
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::NotSpd("singular metric factor".into()))?;
    let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let q = eig.eigenvectors.column(order[0]).into_owned();
    let w = r
        .solve_upper_triangular(&q)
        .ok_or_else(|| Error::NotSpd("singular metric factor".into()))?;
    Ok(LdaOracle {
        eigenvalues,
        w: canonical_sign(w),
        degenerate: false,
    })
}

/// Dense LDA oracle.
pub fn exact_lda(x: SparseMatrix, labels: &[i64], lambda: f64) -> Result<LdaResult> {
    Ok(LdaProblem::new(x, labels, lambda)?.exact()?.to_result())
}

/// CountSketch of `X̂`, warm start from the sketched pencil, then RCG.
pub fn sketched_lda(
    x: SparseMatrix,
    labels: &[i64],
    lambda: f64,
    s: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<LdaResult> {
    LdaProblem::new(x, labels, lambda)?.solve(&SolveOptions {
        preconditioner: PreconditionerKind::CountSketch { s },
        solver: SolverKind::Rcg,
        seed,
        warm_start: true,
        config: *config,
    })
}

/// Hessian condition bound `ρ₁/(ρ₁−ρ₂) · κ(S_w + λI, M)`, computing the oracle internally.
pub fn lda_condition_bound(p: &LdaProblem, m: &Preconditioner) -> Result<f64> {
    p.condition_bound(&p.exact()?, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn col(v: &[f64]) -> SparseMatrix {
        SparseMatrix::from_dense(&DMatrix::from_column_slice(v.len(), 1, v))
    }

    #[test]
    fn two_classes_in_one_dimension() {
        let p = LdaProblem::new(col(&[0., 0., 2., 2.]), &[1, 1, 2, 2], 1.0).unwrap();
        assert_relative_eq!(p.between_dense()[(0, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(p.within_dense()[(0, 0)], 0.0, epsilon = 1e-14);
        let o = p.exact().unwrap();
        assert_relative_eq!(o.rho1(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(o.w[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn label_map_is_sorted() {
        let (map, classes) = LabelMap::fit(&[7, -1, 7, 3]);
        assert_eq!(classes, vec![2, 0, 2, 1]);
        assert_eq!(map.label(0), -1);
        assert_eq!(map.len(), 3);
    }

    #[test]
    fn empty_class_and_range() {
        let x = col(&[1., 2.]);
        assert!(matches!(
            LdaProblem::with_classes(x.clone(), vec![0, 0], 2, 0.1),
            Err(Error::EmptyClass(1))
        ));
        assert!(matches!(
            LdaProblem::with_classes(x, vec![0, 3], 2, 0.1),
            Err(Error::LabelOutOfRange { label: 3, classes: 2 })
        ));
    }

    #[test]
    fn stats_take_one_pass() {
        let p = LdaProblem::new(col(&[1., 2., 3.]), &[0, 1, 1], 0.5).unwrap();
        assert_eq!(p.build_passes(), 1);
    }
}

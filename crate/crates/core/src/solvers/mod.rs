//! Riemannian gradient descent and conjugate gradient over products of
//! ellipsoids, plus a Hessian-spectrum diagnostic.

mod descent;
mod diagnostics;
mod problem;
mod trace;

pub use descent::{rcg, rgd, rgd_fixed_step, SolverOutput};
pub use diagnostics::{hessian_condition_at, HessianSpectrum};
pub use problem::{QuadraticProblem, QuadraticTerm};
pub use trace::{ConvergenceTrace, IterationRecord, Status};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig {
    pub sufficient_decrease: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            sufficient_decrease: 1e-4,
            backtrack: 0.5,
            max_halvings: 50,
        }
    }
}

/// How the first trial step of each line search is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialStep {
    /// [`InitialStep::Doubling`] for gradient descent and
    /// [`InitialStep::LineMinimizer`] for conjugate gradient, whose directions
    /// lose conjugacy under crude steps.
    Auto,
    /// `1/‖grad‖_M` on the first iteration, then twice the last accepted step.
    Doubling,
    /// Minimizer of the objective along the retraction curve. Free of data
    /// passes since the curve is evaluated from cached products.
    LineMinimizer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once `‖grad‖_M ≤ grad_tol · max(1, |f|)`.
    pub grad_tol: f64,
    pub armijo: ArmijoConfig,
    pub initial_step: InitialStep,
    /// Steepest-descent restart period for CG; `None` means the manifold dimension.
    pub restart_period: Option<usize>,
    /// Optimal objective, enabling the suboptimality column.
    pub reference_objective: Option<f64>,
    /// Stop once the suboptimality falls below this (needs a reference).
    pub subopt_tol: Option<f64>,
    /// Keep every iterate in the trace.
    pub keep_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: 1e-8,
            armijo: ArmijoConfig::default(),
            initial_step: InitialStep::Auto,
            restart_period: None,
            reference_objective: None,
            subopt_tol: None,
            keep_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.armijo;
        let ok = self.grad_tol > 0.0
            && self.grad_tol < 1.0
            && a.sufficient_decrease > 0.0
            && a.sufficient_decrease < 1.0
            && a.backtrack > 0.0
            && a.backtrack < 1.0
            && a.max_halvings > 0
            && self.restart_period != Some(0)
            && self.subopt_tol.is_none_or(|t| t > 0.0 && t < 1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver config {self:?}")))
        }
    }

    /// Relative objective gap against the reference, if any.
    pub fn suboptimality(&self, f: f64) -> Option<f64> {
        self.reference_objective.map(|r| {
            let gap = (f - r).abs();
            if r == 0.0 {
                gap
            } else {
                gap / r.abs()
            }
        })
    }
}

/// Metric family used by the CCA and LDA drivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    Identity,
    /// The exact constraint matrix, formed densely.
    Exact,
    /// Sketched Gram from a CountSketch with `s` rows.
    CountSketch { s: usize },
    /// Rank-`k` dominant subspace of the constraint Gram.
    Dominant { k: usize },
}

impl std::fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PreconditionerKind::Identity => f.write_str("identity"),
            PreconditionerKind::Exact => f.write_str("exact"),
            PreconditionerKind::CountSketch { s } => write!(f, "countsketch({s})"),
            PreconditionerKind::Dominant { k } => write!(f, "dominant({k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Rgd,
    Rcg,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Rgd => "rgd",
            SolverKind::Rcg => "rcg",
        })
    }
}

/// Options shared by the CCA and LDA drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub preconditioner: PreconditionerKind,
    pub solver: SolverKind,
    pub seed: u64,
    /// Start from the exact solution of the sketched problem. Needs a
    /// CountSketch preconditioner; otherwise a seeded random start is used.
    pub warm_start: bool,
    pub config: SolverConfig,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            preconditioner: PreconditionerKind::Identity,
            solver: SolverKind::Rcg,
            seed: 0,
            warm_start: true,
            config: SolverConfig::default(),
        }
    }
}

/// Runs the chosen solver.
pub fn solve(
    kind: SolverKind,
    problem: &QuadraticProblem,
    x0: nalgebra::DVector<f64>,
    config: &SolverConfig,
) -> Result<SolverOutput> {
    match kind {
        SolverKind::Rgd => rgd(problem, x0, config),
        SolverKind::Rcg => rcg(problem, x0, config),
    }
}

/// Seeded standard Gaussian vector used for cold starts.
pub fn random_start(dim: usize, seed: u64) -> nalgebra::DVector<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    nalgebra::DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng))
}

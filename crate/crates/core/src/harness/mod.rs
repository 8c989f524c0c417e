//! Data loading, experiment runs and CSV traces.

pub mod libsvm;
pub mod synth;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::cca::CcaProblem;
use crate::error::{Error, Result};
use crate::lda::LdaProblem;
use crate::linops::SparseMatrix;
use crate::par::{self, Execution};
use crate::solvers::{
    ConvergenceTrace, PreconditionerKind, SolveOptions, SolverConfig, SolverKind, Status,
};

pub const CSV_HEADER: [&str; 6] = ["iter", "passes", "objective", "gradnorm", "suboptimality", "step"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Cca,
    Lda,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Cca => "cca",
            Task::Lda => "lda",
        })
    }
}

/// How one matrix is cut into two CCA views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Left view gets `⌈d/2⌉` columns.
    #[default]
    Halves,
    /// Left view gets the first `k` columns.
    Left(usize),
}

pub fn split_columns(x: &SparseMatrix, rule: SplitRule) -> Result<(SparseMatrix, SparseMatrix)> {
    let d = x.ncols();
    let k = match rule {
        SplitRule::Halves => d.div_ceil(2),
        SplitRule::Left(k) => k,
    };
    if k == 0 || k >= d {
        return Err(Error::InvalidArgument(format!(
            "cannot split {d} columns with {k} on the left"
        )));
    }
    Ok((x.select_columns(0..k)?, x.select_columns(k..d)?))
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Two libsvm files with matching rows.
    Views { x: PathBuf, y: PathBuf },
    /// One libsvm file cut into two views.
    Split { data: PathBuf, rule: SplitRule },
    /// One libsvm file whose labels are the classes, optionally overridden by
    /// a file with one integer label per line.
    Labeled { data: PathBuf, labels: Option<PathBuf> },
}

#[derive(Debug, Clone)]
pub enum Dataset {
    Cca { x: SparseMatrix, y: SparseMatrix },
    Lda { x: SparseMatrix, labels: Vec<i64> },
}

impl Dataset {
    pub fn task(&self) -> Task {
        match self {
            Dataset::Cca { .. } => Task::Cca,
            Dataset::Lda { .. } => Task::Lda,
        }
    }

    /// Total number of unknowns.
    pub fn dim(&self) -> usize {
        match self {
            Dataset::Cca { x, y } => x.ncols() + y.ncols(),
            Dataset::Lda { x, .. } => x.ncols(),
        }
    }

    /// Largest single block, the lower limit on a sketch size.
    pub fn max_block(&self) -> usize {
        match self {
            Dataset::Cca { x, y } => x.ncols().max(y.ncols()),
            Dataset::Lda { x, .. } => x.ncols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: DataSource,
    /// Ridge for `X` (CCA) or the single ridge (LDA).
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub preconditioner: PreconditionerKind,
    pub solver: SolverKind,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    pub warm_start: bool,
    /// Compute the dense oracle for the suboptimality column.
    pub oracle: bool,
    /// Skip the oracle above this many unknowns.
    pub oracle_cap: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(task: Task, data: DataSource) -> Self {
        Self {
            task,
            data,
            lambda_x: 0.0,
            lambda_y: 0.0,
            preconditioner: PreconditionerKind::Identity,
            solver: SolverKind::Rcg,
            seed: 0,
            tol: 1e-8,
            max_iters: 1000,
            warm_start: true,
            oracle: true,
            oracle_cap: 2000,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_data = matches!(
            (self.task, &self.data),
            (Task::Cca, DataSource::Views { .. } | DataSource::Split { .. })
                | (Task::Lda, DataSource::Labeled { .. })
        );
        if !ok_data {
            return Err(Error::InvalidArgument(format!(
                "data source does not fit task {}",
                self.task
            )));
        }
        match self.preconditioner {
            PreconditionerKind::CountSketch { s: 0 } => {
                Err(Error::InvalidArgument("sketch size must be positive".into()))
            }
            PreconditionerKind::Dominant { k: 0 } => {
                Err(Error::InvalidArgument("rank must be positive".into()))
            }
            _ => self.solver_config(None).validate(),
        }
    }

    pub fn solver_config(&self, reference: Option<f64>) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters,
            grad_tol: self.tol,
            reference_objective: reference,
            ..SolverConfig::default()
        }
    }

    fn options(&self, reference: Option<f64>) -> SolveOptions {
        SolveOptions {
            preconditioner: self.preconditioner,
            solver: self.solver,
            seed: self.seed,
            warm_start: self.warm_start,
            config: self.solver_config(reference),
        }
    }
}

fn read_labels(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("label `{}` is not an integer", l.trim()),
            })
        })
        .collect()
}

pub fn load(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Views { x, y } => {
            let x = libsvm::read_path(x, 0)?.matrix;
            let y = libsvm::read_path(y, 0)?.matrix;
            if x.nrows() != y.nrows() {
                return Err(Error::InvalidStructure(format!(
                    "views have {} and {} rows",
                    x.nrows(),
                    y.nrows()
                )));
            }
            Ok(Dataset::Cca { x, y })
        }
        DataSource::Split { data, rule } => {
            let m = libsvm::read_path(data, 0)?.matrix;
            let (x, y) = split_columns(&m, *rule)?;
            Ok(Dataset::Cca { x, y })
        }
        DataSource::Labeled { data, labels } => {
            let d = libsvm::read_path(data, 0)?;
            let labels = match labels {
                Some(p) => {
                    let l = read_labels(p)?;
                    if l.len() != d.matrix.nrows() {
                        return Err(Error::InvalidStructure(format!(
                            "{} labels for {} rows",
                            l.len(),
                            d.matrix.nrows()
                        )));
                    }
                    l
                }
                None => libsvm::integer_labels(&d)?,
            };
            Ok(Dataset::Lda {
                x: d.matrix,
                labels,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub task: Task,
    pub preconditioner: PreconditionerKind,
    pub solver: SolverKind,
    pub seed: u64,
    pub status: Status,
    pub iterations: usize,
    pub iterations_to_tol: Option<usize>,
    pub setup_passes: u64,
    pub start_passes: u64,
    pub iteration_passes: u64,
    /// `σ₁` for CCA, `ρ₁` for LDA.
    pub value: f64,
    pub reference: Option<f64>,
    pub suboptimality: Option<f64>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "na".into());
        write!(
            f,
            "task={} precond={} solver={} seed={} status={} iters={} iters_to_tol={} \
             setup_passes={} start_passes={} iter_passes={} value={} reference={} subopt={}",
            self.task,
            self.preconditioner,
            self.solver,
            self.seed,
            self.status,
            self.iterations,
            opt(self.iterations_to_tol.map(|v| v.to_string())),
            self.setup_passes,
            self.start_passes,
            self.iteration_passes,
            self.value,
            opt(self.reference.map(|v| v.to_string())),
            opt(self.suboptimality.map(|v| format!("{v:e}"))),
        )
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trace: ConvergenceTrace,
    pub summary: Summary,
}

impl ExperimentOutput {
    pub fn csv(&self) -> Result<Vec<u8>> {
        trace_csv(&self.trace)
    }
}

/// The trace as CSV. Missing suboptimalities are empty cells.
pub fn trace_csv(trace: &ConvergenceTrace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::Io(e.into());
    w.write_record(CSV_HEADER).map_err(to_io)?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            r.passes.to_string(),
            r.objective.to_string(),
            r.grad_norm.to_string(),
            r.suboptimality.map_or(String::new(), |s| s.to_string()),
            r.step.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Dense optimum (`σ₁` or `ρ₁`) when the oracle is enabled and the problem
/// has at most `oracle_cap` unknowns.
pub fn oracle_value(data: &Dataset, config: &ExperimentConfig) -> Result<Option<f64>> {
    if !config.oracle {
        return Ok(None);
    }
    if data.dim() > config.oracle_cap {
        log::warn!(
            "{} unknowns exceed the oracle cap {}; suboptimality omitted",
            data.dim(),
            config.oracle_cap
        );
        return Ok(None);
    }
    Ok(Some(match data {
        Dataset::Cca { x, y } => {
            CcaProblem::new(x.clone(), y.clone(), config.lambda_x, config.lambda_y)?
                .exact()?
                .sigma1()
        }
        Dataset::Lda { x, labels } => LdaProblem::new(x.clone(), labels, config.lambda_x)?
            .exact()?
            .rho1(),
    }))
}

/// Solves `data` as configured, with suboptimality against the dense oracle
/// when [`oracle_value`] provides one.
pub fn run_on(data: &Dataset, config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let reference = oracle_value(data, config)?;
    run_with_reference(data, config, reference)
}

fn run_with_reference(
    data: &Dataset,
    config: &ExperimentConfig,
    reference: Option<f64>,
) -> Result<ExperimentOutput> {
    config.validate()?;
    if data.task() != config.task {
        return Err(Error::InvalidArgument(format!(
            "{} data given to a {} run",
            data.task(),
            config.task
        )));
    }
    let (trace, value, setup, start) = match data {
        Dataset::Cca { x, y } => {
            let p = CcaProblem::new(x.clone(), y.clone(), config.lambda_x, config.lambda_y)?;
            let r = p.solve(&config.options(reference.map(|s| -s)))?;
            (r.trace, r.sigma1, r.setup_passes, r.start_passes)
        }
        Dataset::Lda { x, labels } => {
            let p = LdaProblem::new(x.clone(), labels, config.lambda_x)?;
            let r = p.solve(&config.options(reference.map(|s| -0.5 * s)))?;
            (r.trace, r.rho1, p.build_passes() + r.setup_passes, r.start_passes)
        }
    };
    let iteration_passes = trace.total_passes().saturating_sub(first_passes(&trace));
    let suboptimality = reference.map(|r| relative_gap(value, r));
    let summary = Summary {
        task: config.task,
        preconditioner: config.preconditioner,
        solver: config.solver,
        seed: config.seed,
        status: trace.status,
        iterations: trace.iterations(),
        iterations_to_tol: trace.iterations_to_tolerance(config.tol),
        setup_passes: setup,
        start_passes: start,
        iteration_passes,
        value,
        reference,
        suboptimality,
    };
    Ok(ExperimentOutput { trace, summary })
}

fn relative_gap(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        (value - reference).abs()
    } else {
        (value - reference).abs() / reference.abs()
    }
}

fn first_passes(trace: &ConvergenceTrace) -> u64 {
    trace.records.first().map_or(0, |r| r.passes)
}

/// Loads the data, runs, and writes the CSV trace when an output path is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let data = load(&config.data)?;
    let out = run_on(&data, config)?;
    if let Some(path) = &config.output {
        std::fs::File::create(path)?.write_all(&out.csv()?)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub preconditioner: PreconditionerKind,
    pub seed: u64,
    pub status: Status,
    pub iterations: usize,
    pub iterations_to_tol: Option<usize>,
    pub total_passes: u64,
    pub suboptimality: Option<f64>,
}

/// Runs `base` once per (preconditioner, seed) pair. Runs are independent and
/// proceed concurrently under [`Execution::Parallel`]; rows come back in
/// input order.
pub fn sweep(
    data: &Dataset,
    base: &ExperimentConfig,
    preconditioners: &[PreconditionerKind],
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(PreconditionerKind, u64)> = preconditioners
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let reference = oracle_value(data, base)?;
    par::map_slice(&jobs, exec, |&(preconditioner, seed)| {
        let cfg = ExperimentConfig {
            preconditioner,
            seed,
            ..base.clone()
        };
        let out = run_with_reference(data, &cfg, reference)?;
        Ok(SweepRow {
            preconditioner,
            seed,
            status: out.summary.status,
            iterations: out.summary.iterations,
            iterations_to_tol: out.summary.iterations_to_tol,
            total_passes: out.summary.setup_passes + out.summary.start_passes + out.trace.total_passes(),
            suboptimality: out.summary.suboptimality,
        })
    })
    .into_iter()
    .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["preconditioner", "seed", "status", "iterations", "iters_to_tol", "passes", "suboptimality"])
        .map_err(to_io)?;
    for r in rows {
        w.write_record([
            r.preconditioner.to_string(),
            r.seed.to_string(),
            r.status.to_string(),
            r.iterations.to_string(),
            r.iterations_to_tol.map_or(String::new(), |v| v.to_string()),
            r.total_passes.to_string(),
            r.suboptimality.map_or(String::new(), |v| v.to_string()),
        ])
        .map_err(to_io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Median of the iterations-to-tolerance per preconditioner, in input order.
/// Runs that never reached the tolerance count as `usize::MAX`.
pub fn median_iterations(rows: &[SweepRow], preconditioners: &[PreconditionerKind]) -> Vec<usize> {
    preconditioners
        .iter()
        .map(|p| {
            let mut v: Vec<usize> = rows
                .iter()
                .filter(|r| r.preconditioner == *p)
                .map(|r| r.iterations_to_tol.unwrap_or(usize::MAX))
                .collect();
            v.sort_unstable();
            if v.is_empty() {
                usize::MAX
            } else {
                v[v.len() / 2]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn split_rules() {
        let x = SparseMatrix::from_dense(&DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 + 1.0));
        let (l, r) = split_columns(&x, SplitRule::Halves).unwrap();
        assert_eq!((l.ncols(), r.ncols()), (3, 2));
        assert_eq!(l.hstack(&r).unwrap(), x);
        let (l, r) = split_columns(&x, SplitRule::Left(1)).unwrap();
        assert_eq!((l.ncols(), r.ncols()), (1, 4));
        assert!(split_columns(&x, SplitRule::Left(5)).is_err());
        let even = SparseMatrix::from_dense(&DMatrix::from_element(2, 4, 1.0));
        let (l, r) = split_columns(&even, SplitRule::Halves).unwrap();
        assert_eq!((l.ncols(), r.ncols()), (2, 2));
    }

    #[test]
    fn task_and_source_must_agree() {
        let cfg = ExperimentConfig::new(
            Task::Lda,
            DataSource::Split {
                data: "x".into(),
                rule: SplitRule::Halves,
            },
        );
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
    }
}

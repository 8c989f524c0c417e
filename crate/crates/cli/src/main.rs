use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ellipsoid_opt::harness::synth::{correlated_views, gaussian_blobs, CcaSpec, LdaSpec};
use ellipsoid_opt::harness::{
    libsvm, load, run_experiment, sweep, sweep_csv, DataSource, ExperimentConfig, SplitRule, Task,
};
use ellipsoid_opt::linops::SparseMatrix;
use ellipsoid_opt::par::Execution;
use ellipsoid_opt::solvers::{PreconditionerKind, SolverKind};
use ellipsoid_opt::Error;
use nalgebra::DMatrix;

/// Riemannian-preconditioned top-1 CCA and LDA on libsvm data.
#[derive(Parser, Debug)]
#[command(name = "ellopt", version)]
struct Cli {
    /// Log progress and warnings to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Leading canonical pair of two views.
    Cca(CcaArgs),
    /// Leading discriminant direction of labeled data.
    Lda(LdaArgs),
    /// Run a grid of preconditioners and seeds, one summary row per run.
    Sweep(SweepArgs),
    /// Write a synthetic libsvm dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct CcaData {
    /// First view (libsvm).
    #[arg(long, requires = "y", conflicts_with = "data")]
    x: Option<PathBuf>,
    /// Second view (libsvm), same rows as --x.
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// A single libsvm file split into two views by columns.
    #[arg(long, required_unless_present = "x")]
    data: Option<PathBuf>,
    /// Columns given to the first view; defaults to the left half, rounded up.
    #[arg(long, requires = "data")]
    split_cols: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    lambda_x: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_y: f64,
}

impl CcaData {
    fn source(&self) -> DataSource {
        match (&self.x, &self.y, &self.data) {
            (Some(x), Some(y), _) => DataSource::Views {
                x: x.clone(),
                y: y.clone(),
            },
            (_, _, Some(d)) => DataSource::Split {
                data: d.clone(),
                rule: self.split_cols.map_or(SplitRule::Halves, SplitRule::Left),
            },
            _ => unreachable!("clap enforces a data source"),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct LdaData {
    /// Labeled libsvm file.
    #[arg(long)]
    data: PathBuf,
    /// Integer class labels, one per line, replacing the labels in --data.
    #[arg(long)]
    labels_from_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
}

impl LdaData {
    fn source(&self) -> DataSource {
        DataSource::Labeled {
            data: self.data.clone(),
            labels: self.labels_from_file.clone(),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Precond {
    Identity,
    Exact,
    Countsketch,
    Dominant,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Solver {
    Rgd,
    Rcg,
}

#[derive(Args, Debug, Clone)]
struct RunOpts {
    #[arg(long, value_enum, default_value_t = Precond::Countsketch)]
    precond: Precond,
    /// Sketch rows for the countsketch preconditioner; defaults to 4x the largest block.
    #[arg(long)]
    sketch_size: Option<usize>,
    /// Retained rank for the dominant preconditioner.
    #[arg(long)]
    rank_k: Option<usize>,
    #[arg(long, value_enum, default_value_t = Solver::Rcg)]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gradient-norm tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Start from a seeded random point instead of the sketched solution.
    #[arg(long)]
    no_warm_start: bool,
    /// Largest problem dimension for which the dense oracle is computed.
    #[arg(long, default_value_t = 2000)]
    oracle_cap: usize,
}

#[derive(Args, Debug)]
struct CcaArgs {
    #[command(flatten)]
    data: CcaData,
    #[command(flatten)]
    run: RunOpts,
    /// Trace CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LdaArgs {
    #[command(flatten)]
    data: LdaData,
    #[command(flatten)]
    run: RunOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum TaskArg {
    Cca,
    Lda,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(value_enum)]
    task: TaskArg,
    /// Data for a CCA sweep (first view, or the file to split).
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    split_cols: Option<usize>,
    #[arg(long)]
    labels_from_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    lambda_x: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda_y: f64,
    /// LDA ridge.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Preconditioner families to include.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "countsketch")]
    precond: Vec<Precond>,
    /// Sketch sizes for countsketch; defaults to d, 4d and 16d for the largest block d.
    #[arg(long, value_delimiter = ',')]
    sketch_size: Vec<usize>,
    #[arg(long)]
    rank_k: Option<usize>,
    #[arg(long, value_enum, default_value_t = Solver::Rcg)]
    solver: Solver,
    /// Seeds 0..seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long, default_value_t = 2000)]
    oracle_cap: usize,
    /// Run the grid one job at a time.
    #[arg(long)]
    sequential: bool,
    /// Summary CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(value_enum)]
    task: TaskArg,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Columns per view for CCA, features for LDA.
    #[arg(long, default_value_t = 20)]
    d: usize,
    /// Number of classes for LDA.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Spread of column scales in decades.
    #[arg(long, default_value_t = 0.0)]
    col_decades: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn precond_kind(p: Precond, sketch: Option<usize>, rank: Option<usize>, d: usize) -> Result<PreconditionerKind, Failure> {
    Ok(match p {
        Precond::Identity => PreconditionerKind::Identity,
        Precond::Exact => PreconditionerKind::Exact,
        Precond::Countsketch => PreconditionerKind::CountSketch {
            s: sketch.unwrap_or(4 * d),
        },
        Precond::Dominant => PreconditionerKind::Dominant {
            k: rank.ok_or_else(|| Failure::Usage("--precond dominant needs --rank-k".into()))?,
        },
    })
}

fn solver_kind(s: Solver) -> SolverKind {
    match s {
        Solver::Rgd => SolverKind::Rgd,
        Solver::Rcg => SolverKind::Rcg,
    }
}

fn apply_run_opts(cfg: &mut ExperimentConfig, run: &RunOpts, d: usize) -> Result<(), Failure> {
    cfg.preconditioner = precond_kind(run.precond, run.sketch_size, run.rank_k, d)?;
    cfg.solver = solver_kind(run.solver);
    cfg.seed = run.seed;
    cfg.tol = run.tol;
    cfg.max_iters = run.max_iters;
    cfg.warm_start = !run.no_warm_start;
    cfg.oracle_cap = run.oracle_cap;
    Ok(())
}

fn run_single(mut cfg: ExperimentConfig, run: &RunOpts) -> Result<(), Failure> {
    // the default sketch size depends on the data width
    let d = if run.precond == Precond::Countsketch && run.sketch_size.is_none() {
        load(&cfg.data)?.max_block()
    } else {
        0
    };
    apply_run_opts(&mut cfg, run, d)?;
    validate(&cfg)?;
    let out = run_experiment(&cfg)?;
    if cfg.output.is_none() {
        std::io::stdout().write_all(&out.csv()?).map_err(Error::from)?;
    }
    eprintln!("{}", out.summary);
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    cfg.validate().map_err(|e| match e {
        Error::InvalidArgument(m) => Failure::Usage(m),
        other => Failure::Run(other),
    })
}

fn run_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let (task, source) = match args.task {
        TaskArg::Cca => {
            let source = match (&args.x, &args.y, &args.data) {
                (Some(x), Some(y), None) => DataSource::Views {
                    x: x.clone(),
                    y: y.clone(),
                },
                (None, None, Some(d)) => DataSource::Split {
                    data: d.clone(),
                    rule: args.split_cols.map_or(SplitRule::Halves, SplitRule::Left),
                },
                _ => return Err(Failure::Usage("cca sweep needs --x and --y, or --data".into())),
            };
            (Task::Cca, source)
        }
        TaskArg::Lda => {
            let data = args
                .data
                .clone()
                .ok_or_else(|| Failure::Usage("lda sweep needs --data".into()))?;
            (
                Task::Lda,
                DataSource::Labeled {
                    data,
                    labels: args.labels_from_file.clone(),
                },
            )
        }
    };
    let mut cfg = ExperimentConfig::new(task, source);
    match task {
        Task::Cca => {
            cfg.lambda_x = args.lambda_x;
            cfg.lambda_y = args.lambda_y;
        }
        Task::Lda => cfg.lambda_x = args.lambda,
    }
    cfg.solver = solver_kind(args.solver);
    cfg.tol = args.tol;
    cfg.max_iters = args.max_iters;
    cfg.warm_start = !args.no_warm_start;
    cfg.oracle_cap = args.oracle_cap;
    validate(&cfg)?;

    let data = load(&cfg.data)?;
    let d = data.max_block();
    let mut kinds = Vec::new();
    for &p in &args.precond {
        if p == Precond::Countsketch {
            let sizes = if args.sketch_size.is_empty() {
                vec![d, 4 * d, 16 * d]
            } else {
                args.sketch_size.clone()
            };
            kinds.extend(sizes.into_iter().map(|s| PreconditionerKind::CountSketch { s }));
        } else {
            kinds.push(precond_kind(p, None, args.rank_k, d)?);
        }
    }
    if args.seeds == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let rows = sweep(&data, &cfg, &kinds, &seeds, exec)?;
    let bytes = sweep_csv(&rows)?;
    match &args.out {
        Some(path) => std::fs::write(path, bytes).map_err(Error::from)?,
        None => std::io::stdout().write_all(&bytes).map_err(Error::from)?,
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> Result<(), Failure> {
    if args.n == 0 || args.d == 0 {
        return Err(Failure::Usage("--n and --d must be positive".into()));
    }
    match args.task {
        TaskArg::Cca => {
            let (x, y) = correlated_views(&CcaSpec {
                n: args.n,
                dx: args.d,
                dy: args.d,
                col_decades: args.col_decades,
                seed: args.seed,
                ..CcaSpec::default()
            });
            let mut m = DMatrix::zeros(args.n, 2 * args.d);
            m.view_mut((0, 0), (args.n, args.d)).copy_from(&x);
            m.view_mut((0, args.d), (args.n, args.d)).copy_from(&y);
            libsvm::write_path(&args.out, &SparseMatrix::from_dense(&m), &vec![0.0; args.n])?;
        }
        TaskArg::Lda => {
            if args.classes < 2 {
                return Err(Failure::Usage("--classes must be at least 2".into()));
            }
            let (x, labels) = gaussian_blobs(&LdaSpec {
                n: args.n,
                d: args.d,
                classes: args.classes,
                col_decades: args.col_decades,
                seed: args.seed,
                ..LdaSpec::default()
            });
            let labels: Vec<f64> = labels.iter().map(|&l| l as f64 + 1.0).collect();
            libsvm::write_path(&args.out, &SparseMatrix::from_dense(&x), &labels)?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Cca(a) => {
            let mut cfg = ExperimentConfig::new(Task::Cca, a.data.source());
            cfg.lambda_x = a.data.lambda_x;
            cfg.lambda_y = a.data.lambda_y;
            cfg.output = a.out;
            run_single(cfg, &a.run)
        }
        Command::Lda(a) => {
            let mut cfg = ExperimentConfig::new(Task::Lda, a.data.source());
            cfg.lambda_x = a.data.lambda;
            cfg.output = a.out;
            run_single(cfg, &a.run)
        }
        Command::Sweep(a) => run_sweep(&a),
        Command::Synth(a) => run_synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(1),
                e if e.is_data_error() => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::time::{Duration, Instant};

use common::{pencil_desc, pencil_kappa, scatter_by_sums, DenseCca};
use ellipsoid_opt::cca::{sketched_cca, CcaProblem};
use ellipsoid_opt::geometry::{Ellipsoid, ProductEllipsoid};
use ellipsoid_opt::harness::synth::{correlated_views, gaussian_blobs, CcaSpec, LdaSpec};
use ellipsoid_opt::harness::{
    libsvm, median_iterations, run_experiment, sweep, DataSource, Dataset, ExperimentConfig,
    SplitRule, Task,
};
use ellipsoid_opt::lda::{sketched_lda, LdaProblem};
use ellipsoid_opt::linops::{DataMatrix, LinearOperator, PassCounter, SparseMatrix};
use ellipsoid_opt::par::Execution;
use ellipsoid_opt::preconditioners::Preconditioner;
use ellipsoid_opt::sketching::{
    effective_dimension, recommended_sketch_size, sketched_condition_numbers, CountSketch,
    SketchTarget,
};
use ellipsoid_opt::solvers::{
    hessian_condition_at, rgd_fixed_step, PreconditionerKind, QuadraticProblem, QuadraticTerm,
    SolveOptions, SolverConfig, SolverKind, Status,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let r = common::geometry_suite(100);
    let t = start.elapsed();
    let ok = r.idempotence <= 1e-12
        && r.self_adjoint <= 1e-12
        && r.tangency <= 1e-12
        && r.retraction_zero <= 1e-14
        && r.retraction_velocity <= 1e-6
        && r.gradient_slope <= 1e-4
        && r.taylor_slope_min >= 2.5
        && r.weingarten <= 1e-10
        && within(t, 10.0);
    check(
        ok,
        format!(
            "100 instances, grad rel err {:.1e}, taylor slope [{:.2}, {:.2}], weingarten {:.1e}, {:.2}s",
            r.gradient_slope,
            r.taylor_slope_min,
            r.taylor_slope_max,
            r.weingarten,
            t.as_secs_f64()
        ),
    )
}

fn normalize(b: &DMatrix<f64>, v: DVector<f64>) -> DVector<f64> {
    let n = v.dot(&(b * &v)).sqrt();
    v / n
}

fn single(b: &DMatrix<f64>, m: DMatrix<f64>) -> ProductEllipsoid {
    ProductEllipsoid::single(
        Ellipsoid::new(LinearOperator::dense(b.clone()), Preconditioner::dense(m).unwrap()).unwrap(),
    )
}

fn linear_one_step() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut iters_ok = true;
    for _ in 0..10 {
        let b = common::spd(6, 50.0, &mut rng);
        let lin = common::random_vec(6, &mut rng);
        let p = QuadraticProblem::new(single(&b, b.clone()), vec![], Some(lin.clone())).unwrap();
        let target = normalize(&b, b.clone().lu().solve(&lin).unwrap());
        let mut x0 = normalize(&b, common::random_vec(6, &mut rng));
        if x0.dot(&lin) < 0.0 {
            x0 = -x0;
        }
        let out = rgd_fixed_step(&p, x0, &SolverConfig::default(), |_, x| 1.0 / x.dot(&lin)).unwrap();
        iters_ok &= out.trace.iterations() == 1 && out.trace.status == Status::Converged;
        worst = worst.max((out.x - target).norm());
    }
    check(iters_ok && worst <= 1e-12, format!("10 starts, 1 iteration each, max error {worst:.1e}"))
}

fn inverse_power() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let a = common::spd(7, 40.0, &mut rng);
        let p = QuadraticProblem::new(
            single(&a, a.clone()),
            vec![QuadraticTerm {
                row: 0,
                col: 0,
                op: LinearOperator::Identity(7),
            }],
            None,
        )
        .unwrap();
        let x0 = normalize(&a, common::random_vec(7, &mut rng));
        let config = SolverConfig {
            max_iters: 5,
            grad_tol: 1e-300,
            keep_iterates: true,
            ..SolverConfig::default()
        };
        let out = rgd_fixed_step(&p, x0.clone(), &config, |_, x| 1.0 / x.dot(x)).unwrap();
        if out.trace.iterates.len() != 6 {
            return Err(format!("{} iterates kept", out.trace.iterates.len()));
        }
        let lu = a.clone().lu();
        let mut x = x0;
        for k in 1..=5 {
            x = normalize(&a, lu.solve(&x).unwrap());
            worst = worst.max((&out.trace.iterates[k] - &x).norm());
        }
    }
    check(worst <= 1e-12, format!("5 instances x 5 steps, max error {worst:.1e}"))
}

fn oracle_agreement() -> Outcome {
    let config = SolverConfig::default();

    let start = Instant::now();
    let (x, y) = correlated_views(&CcaSpec {
        n: 5000,
        dx: 40,
        dy: 30,
        seed: 4,
        ..CcaSpec::default()
    });
    let (lx, ly) = (1e-2, 1e-2);
    let r = sketched_cca(x.clone(), y.clone(), lx, ly, 800, 4, &config).map_err(|e| e.to_string())?;
    let t_cca = start.elapsed();
    let dense = DenseCca::new(&x, &y, lx, ly);
    let (s1, _, _) = dense.solve();
    let feas = (r.u.dot(&(&dense.sxx * &r.u)) - 1.0).abs() + (r.v.dot(&(&dense.syy * &r.v)) - 1.0).abs();
    let cca_sub = (s1 - r.u.dot(&(&dense.sxy * &r.v))).abs() / s1;

    let start = Instant::now();
    let (x, labels) = gaussian_blobs(&LdaSpec {
        n: 5000,
        d: 50,
        classes: 6,
        seed: 4,
        ..LdaSpec::default()
    });
    let lambda = 1e-1;
    let ints: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
    let r = sketched_lda(SparseMatrix::from_dense(&x), &ints, lambda, 1000, 4, &config)
        .map_err(|e| e.to_string())?;
    let t_lda = start.elapsed();
    let (sw, sb) = scatter_by_sums(&x, &labels, 6);
    let b = sw + DMatrix::identity(50, 50) * lambda;
    let (rho, _) = pencil_desc(&sb, &b);
    let w = normalize(&b, r.w.clone());
    let lda_sub = (rho[0] - w.dot(&(&sb * &w))).abs() / rho[0];

    check(
        cca_sub <= 1e-6
            && feas <= 1e-8
            && lda_sub <= 1e-6
            && within(t_cca, 10.0)
            && within(t_lda, 10.0),
        format!(
            "cca subopt {cca_sub:.1e} in {:.2}s, lda subopt {lda_sub:.1e} in {:.2}s",
            t_cca.as_secs_f64(),
            t_lda.as_secs_f64()
        ),
    )
}

fn sketched_block(z: &DataMatrix, lambda: f64, s: usize, seed: u64) -> Preconditioner {
    let sk = CountSketch::new(z.nrows(), s, seed).unwrap();
    let zs = sk.apply(z, &PassCounter::new()).unwrap();
    Preconditioner::sketched_gram(&zs, lambda).unwrap()
}

fn cca_bound() -> Outcome {
    let (x, y) = correlated_views(&CcaSpec {
        n: 1500,
        dx: 10,
        dy: 8,
        col_decades: 1.0,
        seed: 5,
        ..CcaSpec::default()
    });
    let (lx, ly) = (1e-2, 1e-2);
    let dense = DenseCca::new(&x, &y, lx, ly);
    let (s1, s2, z) = dense.solve();
    let gap = 2.0 * s1 / (s1 - s2);
    let p = CcaProblem::new(x, y, lx, ly).unwrap();
    let sigma = dense.sigma();
    let metrics = [
        ("identity", Preconditioner::Identity(18)),
        ("exact", Preconditioner::dense(sigma.clone()).unwrap()),
        (
            "sketched",
            Preconditioner::BlockDiagonal(vec![
                sketched_block(p.x(), lx, 80, 1),
                sketched_block(p.y(), ly, 80, 2),
            ]),
        ),
        (
            "dominant",
            Preconditioner::BlockDiagonal(vec![
                Preconditioner::dominant_subspace(p.x(), lx, 4).unwrap(),
                Preconditioner::dominant_subspace(p.y(), ly, 3).unwrap(),
            ]),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, m) in &metrics {
        let q = p.quadratic_with_metric(m).unwrap();
        let spec = hessian_condition_at(&q, &z).unwrap();
        let bound = gap * pencil_kappa(&sigma, &m.to_dense());
        ok &= !spec.indefinite && spec.kappa <= bound * 1.01;
        if *name == "exact" {
            ok &= spec.kappa <= gap;
        }
        parts.push(format!("{name} {:.3}/{:.3}", spec.kappa, bound));
    }
    check(ok, format!("measured/bound: {}", parts.join(", ")))
}

fn lda_bound() -> Outcome {
    let (x, labels) = gaussian_blobs(&LdaSpec {
        n: 1500,
        d: 10,
        classes: 3,
        col_decades: 1.0,
        seed: 6,
        ..LdaSpec::default()
    });
    let lambda = 1e-1;
    let (sw, sb) = scatter_by_sums(&x, &labels, 3);
    let b = sw + DMatrix::identity(10, 10) * lambda;
    let (rho, vecs) = pencil_desc(&sb, &b);
    let rank_deficient = rho[9].abs() <= 1e-10 * rho[0];
    let gap = rho[0] / (rho[0] - rho[1]);
    let w = vecs.column(0).into_owned();
    let p = LdaProblem::with_classes(SparseMatrix::from_dense(&x), labels, 3, lambda).unwrap();
    let metrics = [
        ("identity", Preconditioner::Identity(10)),
        ("exact", Preconditioner::dense(b.clone()).unwrap()),
        ("sketched", sketched_block(p.xhat(), lambda, 100, 3)),
        ("dominant", Preconditioner::dominant_subspace(p.xhat(), lambda, 4).unwrap()),
    ];
    let mut ok = rank_deficient;
    let mut parts = Vec::new();
    for (name, m) in &metrics {
        let q = p.quadratic(m.clone()).unwrap();
        let spec = hessian_condition_at(&q, &w).unwrap();
        let bound = gap * pencil_kappa(&b, &m.to_dense());
        ok &= !spec.indefinite && spec.kappa <= bound * 1.01;
        parts.push(format!("{name} {:.3}/{:.3}", spec.kappa, bound));
    }
    check(
        ok,
        format!("rho_d/rho_1 {:.1e}, measured/bound: {}", rho[9] / rho[0], parts.join(", ")),
    )
}

fn sketch_guarantee() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, d) = (20_000, 20);
    let decay = DVector::from_fn(d, |j, _| 0.6f64.powi(j as i32));
    let z = DMatrix::from_fn(n, d, |_, j| rng.random_range(-1.0..1.0) * decay[j]);
    let lambda = 50.0;
    let s_eff = effective_dimension(&z, lambda).unwrap();
    let s = recommended_sketch_size(s_eff, 0.1, SketchTarget::Lda).unwrap();
    let seeds: Vec<u64> = (0..100).collect();
    let kappas = sketched_condition_numbers(&DataMatrix::from(z), lambda, s, &seeds, Execution::default())
        .map_err(|e| e.to_string())?;
    let good = kappas.iter().filter(|&&k| k <= 3.0).count() as f64 / 100.0;
    let t = start.elapsed();
    check(
        good >= 0.9 && within(t, 30.0),
        format!(
            "s_lambda {s_eff:.2}, s = {s}, fraction with kappa <= 3: {good:.2}, worst {:.3}, {:.2}s",
            kappas.iter().copied().fold(0.0, f64::max),
            t.as_secs_f64()
        ),
    )
}

fn trend() -> Outcome {
    let (x, y) = correlated_views(&CcaSpec {
        n: 1500,
        dx: 12,
        dy: 12,
        col_decades: 1.5,
        seed: 42,
        ..CcaSpec::default()
    });
    let data = Dataset::Cca {
        x: SparseMatrix::from_dense(&x),
        y: SparseMatrix::from_dense(&y),
    };
    let mut cfg = ExperimentConfig::new(
        Task::Cca,
        DataSource::Split {
            data: "unused".into(),
            rule: SplitRule::Halves,
        },
    );
    cfg.lambda_x = 1e-3;
    cfg.lambda_y = 1e-3;
    cfg.tol = 1e-8;
    cfg.max_iters = 5000;
    cfg.warm_start = false;
    let d = data.max_block();
    let seeds = [0, 1, 2, 3, 4];
    let order = [
        PreconditionerKind::Identity,
        PreconditionerKind::CountSketch { s: 4 * d },
        PreconditionerKind::Exact,
    ];
    let sizes: Vec<PreconditionerKind> =
        [1, 4, 16].iter().map(|m| PreconditionerKind::CountSketch { s: m * d }).collect();
    let rows = sweep(&data, &cfg, &order, &seeds, Execution::default()).map_err(|e| e.to_string())?;
    let by_kind = median_iterations(&rows, &order);
    let rows = sweep(&data, &cfg, &sizes, &seeds, Execution::default()).map_err(|e| e.to_string())?;
    let by_size = median_iterations(&rows, &sizes);
    let mono = |v: &[usize]| v.windows(2).all(|w| w[1] <= w[0]) && v[0] != usize::MAX;
    check(
        mono(&by_kind) && mono(&by_size),
        format!("identity/cs(4d)/exact medians {by_kind:?}, cs(d/4d/16d) medians {by_size:?}"),
    )
}

fn cost_model() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;

    let (x, y) = correlated_views(&CcaSpec {
        n: 800,
        dx: 8,
        dy: 6,
        seed: 9,
        ..CcaSpec::default()
    });
    let dx = DataMatrix::from(x.clone());
    let pc = PassCounter::new();
    CountSketch::new(800, 64, 1).unwrap().apply(&dx, &pc).unwrap();
    ok &= pc.get() == 1;
    parts.push(format!("sketch {} pass", pc.get()));

    let cca = CcaProblem::new(x, y, 1e-3, 1e-3).unwrap();
    let (xl, labels) = gaussian_blobs(&LdaSpec {
        n: 800,
        d: 8,
        seed: 9,
        ..LdaSpec::default()
    });
    let lda = LdaProblem::with_classes(SparseMatrix::from_dense(&xl), labels, 3, 0.1).unwrap();
    ok &= lda.build_passes() == 1;
    for solver in [SolverKind::Rgd, SolverKind::Rcg] {
        let opts = SolveOptions {
            preconditioner: PreconditionerKind::CountSketch { s: 64 },
            solver,
            seed: 1,
            ..SolveOptions::default()
        };
        let r = cca.solve(&opts).map_err(|e| e.to_string())?;
        let per = r.trace.passes_per_iteration();
        ok &= r.setup_passes == 2 && !per.is_empty() && per.iter().all(|&p| p == per[0]);
        parts.push(format!("cca {solver} setup {} iter {:?}", r.setup_passes, per.first()));
        let r = lda.solve(&opts).map_err(|e| e.to_string())?;
        let per = r.trace.passes_per_iteration();
        ok &= r.setup_passes == 1 && !per.is_empty() && per.iter().all(|&p| p == per[0]);
        parts.push(format!("lda {solver} setup {} iter {:?}", r.setup_passes, per.first()));
    }
    check(ok, parts.join(", "))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("ellopt-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let (x, y) = correlated_views(&CcaSpec {
        n: 600,
        dx: 7,
        dy: 5,
        seed: 10,
        ..CcaSpec::default()
    });
    let mut m = DMatrix::zeros(600, 12);
    m.view_mut((0, 0), (600, 7)).copy_from(&x);
    m.view_mut((0, 7), (600, 5)).copy_from(&y);
    let data = dir.join("views.svm");
    libsvm::write_path(&data, &SparseMatrix::from_dense(&m), &vec![0.0; 600]).map_err(|e| e.to_string())?;
    let (xl, labels) = gaussian_blobs(&LdaSpec {
        n: 600,
        d: 9,
        seed: 10,
        ..LdaSpec::default()
    });
    let lda_data = dir.join("blobs.svm");
    let lf: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    libsvm::write_path(&lda_data, &SparseMatrix::from_dense(&xl), &lf).map_err(|e| e.to_string())?;

    let mut cca = ExperimentConfig::new(
        Task::Cca,
        DataSource::Split {
            data,
            rule: SplitRule::Left(7),
        },
    );
    cca.lambda_x = 1e-3;
    cca.lambda_y = 1e-3;
    cca.preconditioner = PreconditionerKind::CountSketch { s: 60 };
    cca.seed = 17;
    let mut lda = ExperimentConfig::new(
        Task::Lda,
        DataSource::Labeled {
            data: lda_data,
            labels: None,
        },
    );
    lda.lambda_x = 0.1;
    lda.preconditioner = PreconditionerKind::CountSketch { s: 60 };
    lda.seed = 17;

    let mut ok = true;
    let mut bytes = 0;
    for (name, mut cfg) in [("cca", cca), ("lda", lda)] {
        let mut outs = Vec::new();
        for run in 0..2 {
            let path = dir.join(format!("{name}{run}.csv"));
            cfg.output = Some(path.clone());
            run_experiment(&cfg).map_err(|e| e.to_string())?;
            outs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ok &= outs[0] == outs[1] && !outs[0].is_empty();
        bytes += outs[0].len();
    }
    std::fs::remove_dir_all(&dir).ok();
    check(ok, format!("cca and lda traces identical across runs ({bytes} bytes)"))
}

fn main() {
    let criteria: [Check; 10] = [
        ("geometry suite", geometry),
        ("linear objective in one step", linear_one_step),
        ("fixed-step iterates equal inverse power iteration", inverse_power),
        ("sketched solvers agree with dense oracles", oracle_agreement),
        ("CCA Hessian condition bound", cca_bound),
        ("LDA Hessian condition bound", lda_bound),
        ("sketch size guarantee", sketch_guarantee),
        ("preconditioning trend", trend),
        ("cost model", cost_model),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

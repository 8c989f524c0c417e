#![allow(dead_code)]

use ellipsoid_opt::geometry::{Ellipsoid, ProductEllipsoid, ProductPoint};
use ellipsoid_opt::linops::{LinearOperator, PassCounter};
use ellipsoid_opt::preconditioners::Preconditioner;
use ellipsoid_opt::solvers::{QuadraticProblem, QuadraticTerm};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_vec(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

/// SPD matrix with eigenvalues spread geometrically over `[1, cond]`.
pub fn spd(d: usize, cond: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let q = random(d, d, rng).qr().q();
    let eig = DVector::from_fn(d, |i, _| cond.powf(i as f64 / (d - 1).max(1) as f64));
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

/// A random quadratic-plus-linear objective on a product of one to three
/// ellipsoids with random constraint and metric, at most 12 unknowns.
pub struct Instance {
    pub problem: QuadraticProblem,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub dims: Vec<usize>,
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=3usize);
    let dims: Vec<usize> = (0..k).map(|_| rng.random_range(2..=12 / k)).collect();
    let n: usize = dims.iter().sum();
    let mut comps = Vec::new();
    let mut b_full = DMatrix::zeros(n, n);
    let mut m_full = DMatrix::zeros(n, n);
    let mut off = 0;
    for &d in &dims {
        let b = spd(d, rng.random_range(1.0..100.0), &mut rng);
        let m = match rng.random_range(0..3) {
            0 => DMatrix::identity(d, d),
            1 => b.clone() * rng.random_range(0.5..2.0),
            _ => spd(d, rng.random_range(1.0..50.0), &mut rng),
        };
        b_full.view_mut((off, off), (d, d)).copy_from(&b);
        m_full.view_mut((off, off), (d, d)).copy_from(&m);
        comps.push(Ellipsoid::new(LinearOperator::dense(b), Preconditioner::dense(m).unwrap()).unwrap());
        off += d;
    }
    let s = random(n, n, &mut rng);
    let a = (&s + s.transpose()) * 0.5;
    let mut terms = Vec::new();
    let mut ri = 0;
    for (i, &di) in dims.iter().enumerate() {
        let mut ci = 0;
        for (j, &dj) in dims.iter().enumerate() {
            terms.push(QuadraticTerm {
                row: i,
                col: j,
                op: LinearOperator::dense(a.view((ri, ci), (di, dj)).into_owned()),
            });
            ci += dj;
        }
        ri += di;
    }
    let lin = random_vec(n, &mut rng);
    let problem = QuadraticProblem::new(ProductEllipsoid::new(comps).unwrap(), terms, Some(lin)).unwrap();
    Instance {
        problem,
        a,
        b: b_full,
        m: m_full,
        dims,
    }
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn random_point(&self, rng: &mut ChaCha8Rng) -> ProductPoint {
        let v = random_vec(self.dim(), rng);
        self.problem
            .manifold()
            .normalize(&v, &PassCounter::new())
            .unwrap()
    }

    pub fn random_tangent(&self, p: &ProductPoint, rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.problem
            .manifold()
            .project(p, &random_vec(self.dim(), rng))
            .unwrap()
    }

    fn g(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&(&self.m * v))
    }

    fn f(&self, x: &DVector<f64>) -> f64 {
        self.problem.objective(x, &PassCounter::new()).unwrap()
    }
}

/// Largest violation of each property over a set of instances.
#[derive(Debug, Default, Clone, Copy)]
pub struct GeometryReport {
    pub idempotence: f64,
    pub self_adjoint: f64,
    pub tangency: f64,
    pub retraction_zero: f64,
    pub retraction_velocity: f64,
    pub gradient_slope: f64,
    /// Smallest fitted log-log slope of the second-order Taylor residual.
    pub taylor_slope_min: f64,
    pub taylor_slope_max: f64,
    pub weingarten: f64,
}

/// Runs every geometric check on instance `seed`.
pub fn check_instance(seed: u64, report: &mut GeometryReport) {
    let inst = instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let man = inst.problem.manifold();
    let scratch = PassCounter::new();
    let p = inst.random_point(&mut rng);
    let x = p.x().clone();

    let (u, v) = (random_vec(inst.dim(), &mut rng), random_vec(inst.dim(), &mut rng));
    let pu = man.project(&p, &u).unwrap();
    let ppu = man.project(&p, &pu).unwrap();
    report.idempotence = report.idempotence.max((&ppu - &pu).norm() / pu.norm().max(1e-300));
    let pv = man.project(&p, &v).unwrap();
    let sa = (inst.g(&pu, &v) - inst.g(&u, &pv)).abs() / (u.norm() * v.norm() * inst.m.norm());
    report.self_adjoint = report.self_adjoint.max(sa);
    let tan = pu.dot(&(&inst.b * &x)).abs() / (pu.norm() * (&inst.b * &x).norm());
    report.tangency = report.tangency.max(tan);

    let xi = inst.random_tangent(&p, &mut rng);
    let xi = &xi / xi.norm();
    let r0 = man.retract(&p, &DVector::zeros(inst.dim()), &scratch).unwrap();
    report.retraction_zero = report.retraction_zero.max((r0.x() - &x).norm());
    let h = 1e-6;
    let fwd = man.retract(&p, &(&xi * h), &scratch).unwrap();
    let bwd = man.retract(&p, &(&xi * -h), &scratch).unwrap();
    let vel = (fwd.x() - bwd.x()) / (2.0 * h);
    report.retraction_velocity = report.retraction_velocity.max((vel - &xi).norm() / xi.norm());

    let grad = inst.problem.rgrad(&p, &scratch).unwrap();
    let slope = inst.g(&grad, &xi);
    let fd = (inst.f(fwd.x()) - inst.f(bwd.x())) / (2.0 * h);
    let scale = grad.norm() * xi.norm() * inst.m.norm();
    report.gradient_slope = report.gradient_slope.max((fd - slope).abs() / scale.max(1e-12));

    // f(R(tξ)) = f + t g(grad, ξ) + t²/2 [g(Hess ξ, ξ) − Σᵢ (ξᵢᵀBᵢξᵢ) gᵢ(xᵢ, gradᵢ)] + O(t³)
    let hess = inst.problem.rhess(&p, &xi, &scratch).unwrap();
    let bxi = &inst.b * &xi;
    let mgrad = &inst.m * &grad;
    let mut curvature = 0.0;
    let mut off = 0;
    for &d in &inst.dims {
        let r = off..off + d;
        curvature += xi.rows(r.start, d).dot(&bxi.rows(r.start, d))
            * x.rows(r.start, d).dot(&mgrad.rows(r.start, d));
        off = r.end;
    }
    let second = inst.g(&hess, &xi) - curvature;
    let f0 = inst.f(&x);
    let ts = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4];
    let resid: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let y = man.retract(&p, &(&xi * t), &scratch).unwrap();
            (inst.f(y.x()) - f0 - t * slope - 0.5 * t * t * second).abs()
        })
        .collect();
    let n = ts.len() as f64;
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = resid.iter().map(|r| r.max(1e-300).ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let fit = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    // a vanishing cubic term makes the residual fourth order
    if resid[0] > 1e-10 {
        if report.taylor_slope_min == 0.0 && report.taylor_slope_max == 0.0 {
            report.taylor_slope_min = fit;
            report.taylor_slope_max = fit;
        }
        report.taylor_slope_min = report.taylor_slope_min.min(fit);
        report.taylor_slope_max = report.taylor_slope_max.max(fit);
    }

    let eg = inst.problem.egrad(&x, &scratch).unwrap();
    let he = inst.problem.ehess_vec(&xi, &scratch).unwrap();
    let via_w = man.hess_apply_weingarten(&p, &eg, &he, &xi, &scratch).unwrap();
    let w_err = (&via_w - &hess).norm() / hess.norm().max(1.0);
    report.weingarten = report.weingarten.max(w_err);
}

pub fn geometry_suite(instances: u64) -> GeometryReport {
    let mut report = GeometryReport::default();
    for seed in 0..instances {
        check_instance(seed, &mut report);
    }
    report
}

/// Generalized eigenvalues of the symmetric-definite pencil `(a, b)` in
/// descending order with the matching `b`-orthonormal eigenvectors, computed
/// through `L⁻¹ a L⁻ᵀ` with `b = LLᵀ`.
pub fn pencil_desc(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let l = b.clone().cholesky().expect("pencil rhs not SPD").l();
    let linv = l.try_inverse().unwrap();
    let c = &linv * a * linv.transpose();
    let eig = ((&c + c.transpose()) * 0.5).symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vecs = DMatrix::from_fn(a.nrows(), idx.len(), |r, k| eig.eigenvectors[(r, idx[k])]);
    (idx.iter().map(|&i| eig.eigenvalues[i]).collect(), linv.transpose() * vecs)
}

pub fn pencil_kappa(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let (vals, _) = pencil_desc(a, b);
    vals[0] / vals[vals.len() - 1]
}

/// Dense CCA reference built from the raw views.
pub struct DenseCca {
    pub sxx: DMatrix<f64>,
    pub syy: DMatrix<f64>,
    pub sxy: DMatrix<f64>,
}

impl DenseCca {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>, lx: f64, ly: f64) -> Self {
        Self {
            sxx: x.tr_mul(x) + DMatrix::identity(x.ncols(), x.ncols()) * lx,
            syy: y.tr_mul(y) + DMatrix::identity(y.ncols(), y.ncols()) * ly,
            sxy: x.tr_mul(y),
        }
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        let (dx, dy) = (self.sxx.nrows(), self.syy.nrows());
        let mut s = DMatrix::zeros(dx + dy, dx + dy);
        s.view_mut((0, 0), (dx, dx)).copy_from(&self.sxx);
        s.view_mut((dx, dx), (dy, dy)).copy_from(&self.syy);
        s
    }

    /// Top two canonical correlations and the optimum `(u, v)` stacked, each
    /// block of unit norm in its own Gram.
    pub fn solve(&self) -> (f64, f64, DVector<f64>) {
        let (dx, dy) = (self.sxx.nrows(), self.syy.nrows());
        let mut c = DMatrix::zeros(dx + dy, dx + dy);
        c.view_mut((0, dx), (dx, dy)).copy_from(&self.sxy);
        c.view_mut((dx, 0), (dy, dx)).copy_from(&self.sxy.transpose());
        let (vals, vecs) = pencil_desc(&c, &self.sigma());
        (vals[0], vals[1], vecs.column(0) * 2f64.sqrt())
    }
}

/// Within- and between-class scatter accumulated point by point.
pub fn scatter_by_sums(x: &DMatrix<f64>, labels: &[usize], l: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let mut means = vec![DVector::zeros(d); l];
    let mut counts = vec![0.0; l];
    for (i, &k) in labels.iter().enumerate() {
        means[k] += x.row(i).transpose();
        counts[k] += 1.0;
    }
    let mut m = DVector::zeros(d);
    for k in 0..l {
        m += &means[k];
        means[k] /= counts[k];
    }
    m /= x.nrows() as f64;
    let mut sw = DMatrix::zeros(d, d);
    for (i, &k) in labels.iter().enumerate() {
        let c = x.row(i).transpose() - &means[k];
        sw += &c * c.transpose();
    }
    let mut sb = DMatrix::zeros(d, d);
    for k in 0..l {
        let c = &means[k] - &m;
        sb += &c * c.transpose() * counts[k];
    }
    (sw, sb)
}

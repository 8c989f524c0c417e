use nalgebra::DVector;

use super::problem::{IterateState, LineModel, QuadraticProblem};
use super::trace::{ConvergenceTrace, IterationRecord, Status};
use super::{InitialStep, SolverConfig};
use crate::error::Result;
use crate::geometry::transport_with;
use crate::linops::PassCounter;

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub x: DVector<f64>,
    pub trace: ConvergenceTrace,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Method {
    Gradient,
    Conjugate,
}

type Schedule<'a> = &'a dyn Fn(usize, &DVector<f64>) -> f64;

/// Riemannian gradient descent with Armijo backtracking.
pub fn rgd(problem: &QuadraticProblem, x0: DVector<f64>, config: &SolverConfig) -> Result<SolverOutput> {
    run(problem, x0, config, Method::Gradient, None)
}

/// Riemannian gradient descent `x_{k+1} = R_x(−τ_k grad f(x_k))` with a
/// caller-supplied step `τ_k = schedule(k, x_k)`.
pub fn rgd_fixed_step<F>(
    problem: &QuadraticProblem,
    x0: DVector<f64>,
    config: &SolverConfig,
    schedule: F,
) -> Result<SolverOutput>
where
    F: Fn(usize, &DVector<f64>) -> f64,
{
    run(problem, x0, config, Method::Gradient, Some(&schedule))
}

/// Riemannian conjugate gradient, Polak–Ribière⁺ with transported gradients.
pub fn rcg(problem: &QuadraticProblem, x0: DVector<f64>, config: &SolverConfig) -> Result<SolverOutput> {
    run(problem, x0, config, Method::Conjugate, None)
}

struct Current {
    f: f64,
    grad: DVector<f64>,
    grad_norm: f64,
}

fn evaluate(problem: &QuadraticProblem, state: &IterateState) -> Result<Current> {
    let point = state.point(problem)?;
    let grad = problem
        .manifold()
        .egrad_to_rgrad(&point, &state.egrad(problem))?;
    let grad_norm = problem.manifold().metric_norm(&grad)?;
    Ok(Current {
        f: state.objective(problem),
        grad,
        grad_norm,
    })
}

fn run(
    problem: &QuadraticProblem,
    x0: DVector<f64>,
    config: &SolverConfig,
    method: Method,
    schedule: Option<Schedule<'_>>,
) -> Result<SolverOutput> {
    config.validate()?;
    let manifold = problem.manifold();
    let passes = PassCounter::new();
    let mut state = IterateState::new(problem, x0, &passes)?;
    let mut cur = evaluate(problem, &state)?;

    let mut trace = ConvergenceTrace::empty(Status::MaxIters);
    let record = |trace: &mut ConvergenceTrace, iter: usize, cur: &Current, step: f64, x: &DVector<f64>| {
        trace.records.push(IterationRecord {
            iter,
            passes: passes.get(),
            objective: cur.f,
            grad_norm: cur.grad_norm,
            step,
            suboptimality: config.suboptimality(cur.f),
        });
        if config.keep_iterates {
            trace.iterates.push(x.clone());
        }
    };
    record(&mut trace, 0, &cur, 0.0, &state.x);

    let restart_period = config
        .restart_period
        .unwrap_or_else(|| manifold.dim().saturating_sub(manifold.components().len()).max(1));
    let mut best = (cur.f, state.x.clone());
    let mut last_step: Option<f64> = None;
    let mut direction: Option<DVector<f64>> = None;
    let mut since_restart = 0usize;

    for k in 0..config.max_iters {
        if cur.grad_norm <= config.grad_tol * cur.f.abs().max(1.0)
            || matches!((config.subopt_tol, config.suboptimality(cur.f)), (Some(t), Some(s)) if s <= t)
        {
            trace.status = Status::Converged;
            break;
        }

        let mut d = match (method, direction.take()) {
            (Method::Conjugate, Some(d)) if since_restart < restart_period => d,
            _ => {
                since_restart = 0;
                -&cur.grad
            }
        };
        let mut slope = manifold.metric_inner(&cur.grad, &d)?;
        if !(slope < 0.0) {
            d = -&cur.grad;
            slope = -cur.grad_norm * cur.grad_norm;
            since_restart = 0;
        }
        let d_norm = manifold.metric_norm(&d)?;
        let model = state.line_model(problem, d, &passes)?;

        let step = match schedule {
            Some(tau) => Some(tau(k, &state.x)),
            None => {
                let rule = match (config.initial_step, method) {
                    (InitialStep::Auto, Method::Gradient) => InitialStep::Doubling,
                    (InitialStep::Auto, Method::Conjugate) => InitialStep::LineMinimizer,
                    (rule, _) => rule,
                };
                let t0 = match rule {
                    InitialStep::LineMinimizer => {
                        line_minimizer(&model, last_step.unwrap_or(1.0 / d_norm))
                    }
                    _ => last_step.map_or(1.0 / d_norm, |t| 2.0 * t),
                };
                armijo(&model, t0, slope, config)
            }
        };
        let Some(t) = step else {
            log::warn!("line search failed at iteration {k}");
            trace.status = Status::LineSearchFailure;
            break;
        };
        last_step = Some(t);

        let prev_grad = std::mem::replace(&mut cur.grad, DVector::zeros(0));
        let prev_sq = cur.grad_norm * cur.grad_norm;
        let moved = state.advance(problem, &model, t)?;
        cur = evaluate(problem, &state)?;
        record(&mut trace, k + 1, &cur, t, &state.x);
        if cur.f < best.0 {
            best = (cur.f, state.x.clone());
        }

        if method == Method::Conjugate {
            let transport = |v: &DVector<f64>| -> Result<DVector<f64>> {
                let parts = manifold.split(v)?;
                let out = parts
                    .iter()
                    .zip(&moved)
                    .map(|(vi, (y, by))| transport_with(y, by, vi))
                    .collect::<Result<Vec<_>>>()?;
                manifold.stack(&out)
            };
            let old_grad = transport(&prev_grad)?;
            let old_dir = transport(&model.d)?;
            let diff = &cur.grad - &old_grad;
            let beta = (manifold.metric_inner(&cur.grad, &diff)? / prev_sq).max(0.0);
            direction = Some(old_dir * beta - &cur.grad);
            since_restart += 1;
        }
    }

    let x = if schedule.is_none() && best.0 < cur.f {
        best.1
    } else {
        state.x
    };
    Ok(SolverOutput { x, trace })
}

/// Backtracks from `t0` until `f(R_x(t d)) ≤ f(x) + c₁ t g(grad, d)`.
fn armijo(model: &LineModel, t0: f64, slope: f64, config: &SolverConfig) -> Option<f64> {
    let a = &config.armijo;
    let mut t = t0;
    if !(t.is_finite() && t > 0.0) {
        return None;
    }
    for _ in 0..=a.max_halvings {
        let delta = model.delta(t);
        if delta.is_finite() && delta <= a.sufficient_decrease * t * slope {
            return Some(t);
        }
        t *= a.backtrack;
    }
    None
}

/// Minimizes `t ↦ f(R_x(t d))` over `t > 0` by bracketing and golden sections.
fn line_minimizer(model: &LineModel, guess: f64) -> f64 {
    let phi = |t: f64| {
        let v = model.delta(t);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut b = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let mut fb = phi(b);
    for _ in 0..60 {
        if fb < 0.0 {
            break;
        }
        b *= 0.5;
        fb = phi(b);
    }
    if !(fb < 0.0) {
        return b;
    }
    let mut c = 2.0 * b;
    let mut fc = phi(c);
    let mut a = 0.0;
    for _ in 0..60 {
        if fc >= fb {
            break;
        }
        a = b;
        b = c;
        fb = fc;
        c *= 2.0;
        fc = phi(c);
    }
    // minimum bracketed in [a, c] with phi(b) below both ends
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, c);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (phi(x1), phi(x2));
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = phi(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = phi(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    if phi(mid) <= fb {
        mid
    } else {
        b
    }
}

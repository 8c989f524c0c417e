use nalgebra::{DMatrix, DVector};

use super::problem::QuadraticProblem;
use crate::error::{Error, Result};
use crate::linops::PassCounter;

/// Extreme eigenvalues of the Riemannian Hessian over the tangent space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianSpectrum {
    pub min: f64,
    pub max: f64,
    /// `|max| / |min|`.
    pub kappa: f64,
    /// Set when the spectrum has mixed or nonpositive signs.
    pub indefinite: bool,
}

/// Builds the Hessian on an `M`-orthonormal tangent basis at `x` and returns
/// its extreme eigenvalues. Desk scale only.
pub fn hessian_condition_at(problem: &QuadraticProblem, x: &DVector<f64>) -> Result<HessianSpectrum> {
    let manifold = problem.manifold();
    let scratch = PassCounter::new();
    let p = manifold.point(x.clone(), &scratch)?;
    let d = manifold.dim();

    let m_dense = manifold.metric_dense();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        let mut q = manifold.project(&p, &e)?;
        let norm0 = q.dot(&(&m_dense * &q)).max(0.0).sqrt();
        // two rounds of modified Gram–Schmidt in the M inner product
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&(&m_dense * &q));
                q -= b * c;
            }
        }
        let norm = q.dot(&(&m_dense * &q)).max(0.0).sqrt();
        if norm > 1e-8 * norm0.max(f64::MIN_POSITIVE) && norm > 1e-300 {
            basis.push(q / norm);
        }
    }
    let expected = d - manifold.components().len();
    if basis.len() != expected {
        return Err(Error::Numerical(format!(
            "tangent basis has {} vectors, expected {expected}",
            basis.len()
        )));
    }

    let eg = problem.egrad(p.x(), &scratch)?;
    let rg = manifold.egrad_to_rgrad(&p, &eg)?;
    let k = basis.len();
    let mut h = DMatrix::zeros(k, k);
    for (j, q) in basis.iter().enumerate() {
        let he = problem.ehess_vec(q, &scratch)?;
        let hq = manifold.hess_apply(&p, &eg, &he, q, &rg, &scratch)?;
        let mhq = &m_dense * hq;
        for (i, b) in basis.iter().enumerate() {
            h[(i, j)] = b.dot(&mhq);
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let vals = h.symmetric_eigenvalues();
    let min = vals.min();
    let max = vals.max();
    let indefinite = !(min > 0.0) && !(max < 0.0) || min == 0.0;
    let (lo, hi) = (min.abs().min(max.abs()), min.abs().max(max.abs()));
    let kappa = if indefinite {
        let small = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if small == 0.0 {
            f64::INFINITY
        } else {
            hi / small
        }
    } else {
        hi / lo
    };
    if indefinite {
        log::warn!("Hessian is not definite at this point (min {min:e}, max {max:e})");
    }
    Ok(HessianSpectrum {
        min,
        max,
        kappa,
        indefinite,
    })
}

//! Geometry of `S^B = {x : xᵀBx = 1}` with the constant metric `g(ξ, η) = ξᵀMη`.
//!
//! Tangent vectors are plain ambient vectors; the base point is whatever
//! [`ManifoldPoint`] they are passed alongside.

mod product;

pub use product::{ProductEllipsoid, ProductPoint};

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{ensure_dim, Error, Result};
use crate::linops::{LinearOperator, PassCounter};
use crate::preconditioners::Preconditioner;

/// Absolute guard on norms and normalizers.
pub const DEGENERATE_GUARD: f64 = 1e-14;
/// Allowed constraint violation `|xᵀBx − 1|` for a manifold point.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Ellipsoid {
    b: LinearOperator,
    m: Arc<Preconditioner>,
}

/// A point on an ellipsoid together with the cached vectors every
/// projection needs: `Bx`, `M⁻¹Bx` and `xᵀBM⁻¹Bx`.
#[derive(Debug, Clone)]
pub struct ManifoldPoint {
    x: DVector<f64>,
    bx: DVector<f64>,
    minv_bx: DVector<f64>,
    denom: f64,
}

impl ManifoldPoint {
    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn bx(&self) -> &DVector<f64> {
        &self.bx
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.x
    }
}

impl Ellipsoid {
    pub fn new(b: LinearOperator, m: impl Into<Arc<Preconditioner>>) -> Result<Self> {
        let m = m.into();
        if b.nrows() != b.ncols() {
            return Err(Error::dims("constraint operator", b.nrows(), b.ncols()));
        }
        ensure_dim("metric dimension", b.nrows(), m.dim())?;
        Ok(Self { b, m })
    }

    /// Sphere-like ellipsoid with metric `M = I`.
    pub fn with_identity_metric(b: LinearOperator) -> Result<Self> {
        let d = b.nrows();
        Self::new(b, Preconditioner::Identity(d))
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &LinearOperator {
        &self.b
    }

    pub fn metric(&self) -> &Arc<Preconditioner> {
        &self.m
    }

    /// Same constraint, different metric.
    pub fn with_metric(&self, m: impl Into<Arc<Preconditioner>>) -> Result<Self> {
        Self::new(self.b.clone(), m)
    }

    /// Probes `vᵀBv > 0`, `vᵀMv > 0` and symmetry of both on the given vectors.
    pub fn check_spd(&self, probes: &[DVector<f64>]) -> Result<()> {
        let scratch = PassCounter::new();
        for (i, v) in probes.iter().enumerate() {
            let bv = self.b.apply(v, &scratch)?;
            let mv = self.m.apply(v)?;
            if !(v.dot(&bv) > 0.0) || !(v.dot(&mv) > 0.0) {
                return Err(Error::NotSpd(format!("probe {i} has nonpositive energy")));
            }
            if let Some(w) = probes.get(i + 1) {
                let bw = self.b.apply(w, &scratch)?;
                let mw = self.m.apply(w)?;
                let tol = 1e-10 * (v.norm() * w.norm()).max(1.0);
                if (w.dot(&bv) - v.dot(&bw)).abs() > tol * bv.norm().max(bw.norm()).max(1.0)
                    || (w.dot(&mv) - v.dot(&mw)).abs() > tol * mv.norm().max(mw.norm()).max(1.0)
                {
                    return Err(Error::NotSpd(format!("probe pair {i} is asymmetric")));
                }
            }
        }
        Ok(())
    }

    /// Wraps `x` as a manifold point, checking the constraint.
    pub fn point(&self, x: DVector<f64>, passes: &PassCounter) -> Result<ManifoldPoint> {
        let bx = self.b.apply(&x, passes)?;
        self.point_from_parts(x, bx)
    }

    /// Like [`Ellipsoid::point`] with `Bx` supplied by the caller.
    pub fn point_from_parts(&self, x: DVector<f64>, bx: DVector<f64>) -> Result<ManifoldPoint> {
        ensure_dim("manifold point", self.dim(), x.len())?;
        ensure_dim("manifold point Bx", self.dim(), bx.len())?;
        let gap = (x.dot(&bx) - 1.0).abs();
        if !(gap <= FEASIBILITY_TOL) {
            return Err(Error::OffManifold(gap));
        }
        let minv_bx = self.m.apply_inverse(&bx)?;
        let denom = bx.dot(&minv_bx);
        if !(denom > DEGENERATE_GUARD) || !denom.is_finite() {
            return Err(Error::NotSpd(format!("xᵀBM⁻¹Bx = {denom:e}")));
        }
        Ok(ManifoldPoint {
            x,
            bx,
            minv_bx,
            denom,
        })
    }

    /// Scales a nonzero `v` onto the ellipsoid.
    pub fn normalize(&self, v: &DVector<f64>, passes: &PassCounter) -> Result<ManifoldPoint> {
        let bv = self.b.apply(v, passes)?;
        let c2 = v.dot(&bv);
        if !(c2 > DEGENERATE_GUARD * DEGENERATE_GUARD) || !c2.is_finite() {
            return Err(Error::DegenerateStep(c2.max(0.0).sqrt()));
        }
        let c = c2.sqrt();
        self.point_from_parts(v / c, bv / c)
    }

    /// `‖v‖_B`.
    pub fn b_norm(&self, v: &DVector<f64>, passes: &PassCounter) -> Result<f64> {
        let bv = self.b.apply(v, passes)?;
        Ok(v.dot(&bv).max(0.0).sqrt())
    }

    /// `g(ξ, η) = ξᵀMη`.
    pub fn metric_inner(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
        Ok(xi.dot(&self.m.apply(eta)?))
    }

    pub fn metric_norm(&self, xi: &DVector<f64>) -> Result<f64> {
        Ok(self.metric_inner(xi, xi)?.max(0.0).sqrt())
    }

    /// `P_x v = v − (xᵀBv / xᵀBM⁻¹Bx) M⁻¹Bx`.
    pub fn project(&self, p: &ManifoldPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("project", self.dim(), v.len())?;
        let coef = p.bx.dot(v) / p.denom;
        Ok(v - &p.minv_bx * coef)
    }

    /// `P_x^⊥ v = (xᵀBv / xᵀBM⁻¹Bx) M⁻¹Bx`.
    pub fn project_normal(&self, p: &ManifoldPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("project_normal", self.dim(), v.len())?;
        Ok(&p.minv_bx * (p.bx.dot(v) / p.denom))
    }

    /// Scaled tangency residual `|vᵀBx| / (‖v‖‖Bx‖)`.
    pub fn tangency_residual(&self, p: &ManifoldPoint, v: &DVector<f64>) -> f64 {
        let scale = v.norm() * p.bx.norm();
        if scale == 0.0 {
            0.0
        } else {
            v.dot(&p.bx).abs() / scale
        }
    }

    /// `R_x(ξ) = (x + ξ) / ‖x + ξ‖_B`.
    pub fn retract(
        &self,
        p: &ManifoldPoint,
        xi: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<ManifoldPoint> {
        ensure_dim("retract", self.dim(), xi.len())?;
        let y = &p.x + xi;
        let by = &p.bx + self.b.apply(xi, passes)?;
        let c = y.dot(&by).max(0.0).sqrt();
        if !(c >= DEGENERATE_GUARD) {
            return Err(Error::DegenerateStep(c));
        }
        self.point_from_parts(y / c, by / c)
    }

    /// Transports `ξ ∈ T_x` along `η` to the tangent space at `R_x(η)`.
    pub fn transport(
        &self,
        p: &ManifoldPoint,
        eta: &DVector<f64>,
        xi: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        ensure_dim("transport", self.dim(), eta.len())?;
        ensure_dim("transport", self.dim(), xi.len())?;
        let y = &p.x + eta;
        let by = &p.bx + self.b.apply(eta, passes)?;
        transport_with(&y, &by, xi)
    }

    /// `grad f = P_x M⁻¹ ∇f̄`.
    pub fn egrad_to_rgrad(&self, p: &ManifoldPoint, egrad: &DVector<f64>) -> Result<DVector<f64>> {
        self.project(p, &self.m.apply_inverse(egrad)?)
    }

    /// `Hess f[η] = P_x M⁻¹[∇²f̄ η − (xᵀ∇f̄ − g(x, grad f)) Bη]`.
    pub fn hess_apply(
        &self,
        p: &ManifoldPoint,
        egrad: &DVector<f64>,
        ehess_eta: &DVector<f64>,
        eta: &DVector<f64>,
        rgrad: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let scalar = p.x.dot(egrad) - self.metric_inner(&p.x, rgrad)?;
        let beta = self.b.apply(eta, passes)?;
        self.project(p, &self.m.apply_inverse(&(ehess_eta - beta * scalar))?)
    }

    /// `W_x(η, u) = −P_x(α M⁻¹Bη)` with `α = xᵀMu`, for `u` normal at `x`.
    pub fn weingarten(
        &self,
        p: &ManifoldPoint,
        eta: &DVector<f64>,
        u: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let alpha = self.metric_inner(&p.x, u)?;
        let beta = self.b.apply(eta, passes)?;
        Ok(-self.project(p, &self.m.apply_inverse(&beta)?)? * alpha)
    }

    /// Hessian as `P_x M⁻¹ ∇²f̄ η + W_x(η, P_x^⊥ M⁻¹ ∇f̄)`.
    pub fn hess_apply_weingarten(
        &self,
        p: &ManifoldPoint,
        egrad: &DVector<f64>,
        ehess_eta: &DVector<f64>,
        eta: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let normal = self.project_normal(p, &self.m.apply_inverse(egrad)?)?;
        let curvature = self.weingarten(p, eta, &normal, passes)?;
        Ok(self.egrad_to_rgrad(p, ehess_eta)? + curvature)
    }
}

/// `(1/c)[ξ − y (Byᵀξ) / c²]` with `c = ‖y‖_B`, given `y` and `By`.
pub(crate) fn transport_with(
    y: &DVector<f64>,
    by: &DVector<f64>,
    xi: &DVector<f64>,
) -> Result<DVector<f64>> {
    let c2 = y.dot(by);
    if !(c2 >= DEGENERATE_GUARD * DEGENERATE_GUARD) {
        return Err(Error::DegenerateStep(c2.max(0.0).sqrt()));
    }
    let c = c2.sqrt();
    Ok((xi - y * (by.dot(xi) / c2)) / c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn diag(v: &[f64]) -> LinearOperator {
        LinearOperator::dense(DMatrix::from_diagonal(&DVector::from_row_slice(v)))
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn sphere_projection() {
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1.])).unwrap();
        let p = e.point(v(&[1., 0.]), &PassCounter::new()).unwrap();
        assert_eq!(e.project(&p, &v(&[3., -7.])).unwrap(), v(&[0., -7.]));
        assert_eq!(e.project_normal(&p, &v(&[3., -7.])).unwrap(), v(&[3., 0.]));
        let t = v(&[0., 2.5]);
        assert_eq!(e.project(&p, &t).unwrap(), t);
        assert_eq!(e.project_normal(&p, &t).unwrap(), v(&[0., 0.]));
    }

    #[test]
    fn stretched_projection() {
        let e = Ellipsoid::with_identity_metric(diag(&[4., 1.])).unwrap();
        let p = e.point(v(&[0.5, 0.]), &PassCounter::new()).unwrap();
        assert_eq!(e.project(&p, &v(&[1.5, 2.])).unwrap(), v(&[0., 2.]));
    }

    #[test]
    fn off_manifold_rejected() {
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1.])).unwrap();
        assert!(matches!(
            e.point(v(&[1., 1.]), &PassCounter::new()),
            Err(Error::OffManifold(_))
        ));
    }

    #[test]
    fn retraction_examples() {
        let pc = PassCounter::new();
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1.])).unwrap();
        let p = e.point(v(&[1., 0.]), &pc).unwrap();
        assert_eq!(e.retract(&p, &v(&[0., 0.]), &pc).unwrap().x(), p.x());
        let r = e.retract(&p, &v(&[0., 1.]), &pc).unwrap();
        let h = 0.5f64.sqrt();
        assert_relative_eq!(r.x().clone(), v(&[h, h]), epsilon = 1e-15);

        let e = Ellipsoid::with_identity_metric(diag(&[4., 1.])).unwrap();
        let p = e.point(v(&[0.5, 0.]), &pc).unwrap();
        let r = e.retract(&p, &v(&[0., 1.]), &pc).unwrap();
        assert_relative_eq!(r.x().clone(), v(&[0.5 * h, h]), epsilon = 1e-15);
    }

    #[test]
    fn transport_examples() {
        let pc = PassCounter::new();
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1.])).unwrap();
        let p = e.point(v(&[1., 0.]), &pc).unwrap();
        let xi = v(&[0., 1.]);
        assert_eq!(e.transport(&p, &v(&[0., 0.]), &xi, &pc).unwrap(), xi);
        let t = e.transport(&p, &v(&[0., 1.]), &xi, &pc).unwrap();
        let q = 1.0 / (2.0 * 2f64.sqrt());
        assert_relative_eq!(t, v(&[-q, q]), epsilon = 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let pc = PassCounter::new();
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1.])).unwrap();
        let p = e.point(v(&[1., 0.]), &pc).unwrap();
        assert_eq!(e.egrad_to_rgrad(&p, &v(&[3., 4.])).unwrap(), v(&[0., 4.]));
        // ∇(½xᵀBx) = Bx is normal
        assert_eq!(e.egrad_to_rgrad(&p, p.bx()).unwrap(), v(&[0., 0.]));
    }

    #[test]
    fn sphere_hessian_of_half_norm() {
        // f̄ = ½xᵀx is constant on the sphere
        let pc = PassCounter::new();
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1., 1.])).unwrap();
        let p = e.point(v(&[0., 1., 0.]), &pc).unwrap();
        let eg = p.x().clone();
        let rg = e.egrad_to_rgrad(&p, &eg).unwrap();
        let eta = v(&[0.3, 0., -1.2]);
        let h = e.hess_apply(&p, &eg, &eta, &eta, &rg, &pc).unwrap();
        assert!(h.norm() < 1e-15);
    }

    #[test]
    fn weingarten_examples() {
        let pc = PassCounter::new();
        let e = Ellipsoid::with_identity_metric(diag(&[1., 1.])).unwrap();
        let p = e.point(v(&[1., 0.]), &pc).unwrap();
        let eta = v(&[0., 1.]);
        assert_eq!(e.weingarten(&p, &eta, &v(&[0., 0.]), &pc).unwrap(), v(&[0., 0.]));
        assert_eq!(e.weingarten(&p, &eta, &v(&[1., 0.]), &pc).unwrap(), v(&[0., -1.]));
    }
}

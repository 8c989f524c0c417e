use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::{Ellipsoid, ManifoldPoint};
use crate::error::{ensure_dim, Error, Result};
use crate::linops::PassCounter;

/// Product of ellipsoids over one contiguous ambient vector, with
/// block-diagonal `B` and `M`.
#[derive(Debug, Clone)]
pub struct ProductEllipsoid {
    components: Vec<Ellipsoid>,
    offsets: Vec<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct ProductPoint {
    x: DVector<f64>,
    blocks: Vec<ManifoldPoint>,
}

impl ProductPoint {
    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn blocks(&self) -> &[ManifoldPoint] {
        &self.blocks
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.x
    }
}

/// Contiguous ranges for block sizes `dims`.
pub fn offsets_for(dims: &[usize]) -> Vec<Range<usize>> {
    let mut start = 0;
    dims.iter()
        .map(|&d| {
            let r = start..start + d;
            start += d;
            r
        })
        .collect()
}

impl ProductEllipsoid {
    pub fn new(components: Vec<Ellipsoid>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("product of zero manifolds".into()));
        }
        let dims: Vec<usize> = components.iter().map(|c| c.dim()).collect();
        Ok(Self {
            offsets: offsets_for(&dims),
            components,
        })
    }

    pub fn single(e: Ellipsoid) -> Self {
        Self {
            offsets: vec![0..e.dim()],
            components: vec![e],
        }
    }

    pub fn dim(&self) -> usize {
        self.offsets.last().map_or(0, |r| r.end)
    }

    pub fn components(&self) -> &[Ellipsoid] {
        &self.components
    }

    pub fn offsets(&self) -> &[Range<usize>] {
        &self.offsets
    }

    pub fn stack(&self, parts: &[DVector<f64>]) -> Result<DVector<f64>> {
        ensure_dim("stack block count", self.components.len(), parts.len())?;
        let mut out = DVector::zeros(self.dim());
        for (r, p) in self.offsets.iter().zip(parts) {
            ensure_dim("stack block", r.len(), p.len())?;
            out.rows_mut(r.start, r.len()).copy_from(p);
        }
        Ok(out)
    }

    pub fn split(&self, v: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        ensure_dim("split", self.dim(), v.len())?;
        Ok(self
            .offsets
            .iter()
            .map(|r| v.rows(r.start, r.len()).into_owned())
            .collect())
    }

    fn map_blocks<F>(&self, v: &DVector<f64>, mut f: F) -> Result<DVector<f64>>
    where
        F: FnMut(usize, &Ellipsoid, DVector<f64>) -> Result<DVector<f64>>,
    {
        let parts = self.split(v)?;
        let out = parts
            .into_iter()
            .enumerate()
            .map(|(i, p)| f(i, &self.components[i], p))
            .collect::<Result<Vec<_>>>()?;
        self.stack(&out)
    }

    pub fn point(&self, x: DVector<f64>, passes: &PassCounter) -> Result<ProductPoint> {
        let blocks = self
            .split(&x)?
            .into_iter()
            .zip(&self.components)
            .map(|(xi, c)| c.point(xi, passes))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductPoint { x, blocks })
    }

    /// Point with per-block `Bᵢxᵢ` supplied.
    pub fn point_from_parts(&self, x: DVector<f64>, bx: Vec<DVector<f64>>) -> Result<ProductPoint> {
        ensure_dim("block Bx count", self.components.len(), bx.len())?;
        let blocks = self
            .split(&x)?
            .into_iter()
            .zip(bx)
            .zip(&self.components)
            .map(|((xi, bxi), c)| c.point_from_parts(xi, bxi))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductPoint { x, blocks })
    }

    /// Scales every block onto its ellipsoid.
    pub fn normalize(&self, v: &DVector<f64>, passes: &PassCounter) -> Result<ProductPoint> {
        let blocks = self
            .split(v)?
            .iter()
            .zip(&self.components)
            .map(|(vi, c)| c.normalize(vi, passes))
            .collect::<Result<Vec<_>>>()?;
        let parts: Vec<DVector<f64>> = blocks.iter().map(|b| b.x().clone()).collect();
        Ok(ProductPoint {
            x: self.stack(&parts)?,
            blocks,
        })
    }

    /// `Σᵢ ξᵢᵀMᵢηᵢ`.
    pub fn metric_inner(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
        ensure_dim("metric inner", self.dim(), xi.len())?;
        ensure_dim("metric inner", self.dim(), eta.len())?;
        let mut total = 0.0;
        for (r, c) in self.offsets.iter().zip(&self.components) {
            let a = xi.rows(r.start, r.len()).into_owned();
            let b = eta.rows(r.start, r.len()).into_owned();
            total += c.metric_inner(&a, &b)?;
        }
        Ok(total)
    }

    pub fn metric_norm(&self, xi: &DVector<f64>) -> Result<f64> {
        Ok(self.metric_inner(xi, xi)?.max(0.0).sqrt())
    }

    /// Metric inner product restricted to block `i`, applied to full vectors.
    pub fn block_metric_inner(&self, i: usize, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
        let r = &self.offsets[i];
        self.components[i].metric_inner(
            &xi.rows(r.start, r.len()).into_owned(),
            &eta.rows(r.start, r.len()).into_owned(),
        )
    }

    pub fn project(&self, p: &ProductPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.map_blocks(v, |i, c, vi| c.project(&p.blocks[i], &vi))
    }

    pub fn project_normal(&self, p: &ProductPoint, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.map_blocks(v, |i, c, vi| c.project_normal(&p.blocks[i], &vi))
    }

    /// Largest blockwise tangency residual.
    pub fn tangency_residual(&self, p: &ProductPoint, v: &DVector<f64>) -> Result<f64> {
        let parts = self.split(v)?;
        Ok(parts
            .iter()
            .enumerate()
            .map(|(i, vi)| self.components[i].tangency_residual(&p.blocks[i], vi))
            .fold(0.0, f64::max))
    }

    pub fn retract(
        &self,
        p: &ProductPoint,
        xi: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<ProductPoint> {
        let blocks = self
            .split(xi)?
            .iter()
            .enumerate()
            .map(|(i, xii)| self.components[i].retract(&p.blocks[i], xii, passes))
            .collect::<Result<Vec<_>>>()?;
        let parts: Vec<DVector<f64>> = blocks.iter().map(|b| b.x().clone()).collect();
        Ok(ProductPoint {
            x: self.stack(&parts)?,
            blocks,
        })
    }

    pub fn transport(
        &self,
        p: &ProductPoint,
        eta: &DVector<f64>,
        xi: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let etas = self.split(eta)?;
        self.map_blocks(xi, |i, c, xii| c.transport(&p.blocks[i], &etas[i], &xii, passes))
    }

    pub fn egrad_to_rgrad(&self, p: &ProductPoint, egrad: &DVector<f64>) -> Result<DVector<f64>> {
        self.map_blocks(egrad, |i, c, gi| c.egrad_to_rgrad(&p.blocks[i], &gi))
    }

    /// Blockwise Hessian `P M⁻¹[∇²f̄η − diag(cᵢ) Bη]`, `cᵢ = xᵢᵀ∇ᵢf̄ − gᵢ(xᵢ, gradᵢ)`.
    pub fn hess_apply(
        &self,
        p: &ProductPoint,
        egrad: &DVector<f64>,
        ehess_eta: &DVector<f64>,
        eta: &DVector<f64>,
        rgrad: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let (eg, et, rg) = (self.split(egrad)?, self.split(eta)?, self.split(rgrad)?);
        self.map_blocks(ehess_eta, |i, c, hi| {
            c.hess_apply(&p.blocks[i], &eg[i], &hi, &et[i], &rg[i], passes)
        })
    }

    /// Blockwise `−P(αᵢ Mᵢ⁻¹Bᵢηᵢ)` with `αᵢ = xᵢᵀMᵢuᵢ`.
    pub fn weingarten(
        &self,
        p: &ProductPoint,
        eta: &DVector<f64>,
        u: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let us = self.split(u)?;
        self.map_blocks(eta, |i, c, ei| c.weingarten(&p.blocks[i], &ei, &us[i], passes))
    }

    /// Hessian via `P M⁻¹∇²f̄η + W(η, P^⊥ M⁻¹∇f̄)`.
    pub fn hess_apply_weingarten(
        &self,
        p: &ProductPoint,
        egrad: &DVector<f64>,
        ehess_eta: &DVector<f64>,
        eta: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let minv_eg = self.map_blocks(egrad, |_, c, gi| c.metric().apply_inverse(&gi))?;
        let normal = self.project_normal(p, &minv_eg)?;
        Ok(self.egrad_to_rgrad(p, ehess_eta)? + self.weingarten(p, eta, &normal, passes)?)
    }

    /// Dense block-diagonal `M`. Desk scale only.
    pub fn metric_dense(&self) -> DMatrix<f64> {
        self.block_diagonal(|c| c.metric().to_dense())
    }

    /// Dense block-diagonal `B`. Desk scale only.
    pub fn constraint_dense(&self) -> Result<DMatrix<f64>> {
        let mats = self
            .components
            .iter()
            .map(|c| c.b().to_dense())
            .collect::<Result<Vec<_>>>()?;
        let mut it = mats.into_iter();
        Ok(self.block_diagonal(|_| it.next().unwrap()))
    }

    fn block_diagonal<F: FnMut(&Ellipsoid) -> DMatrix<f64>>(&self, mut f: F) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (r, c) in self.offsets.iter().zip(&self.components) {
            out.view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(&f(c));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::LinearOperator;

    fn sphere(d: usize) -> Ellipsoid {
        Ellipsoid::with_identity_metric(LinearOperator::Identity(d)).unwrap()
    }

    #[test]
    fn stack_split_offsets() {
        let pe = ProductEllipsoid::new(vec![sphere(1), sphere(2)]).unwrap();
        let z = pe
            .stack(&[DVector::from_vec(vec![1.]), DVector::from_vec(vec![2., 3.])])
            .unwrap();
        assert_eq!(z.as_slice(), &[1., 2., 3.]);
        assert_eq!(pe.split(&z).unwrap()[1].as_slice(), &[2., 3.]);
        let pe = ProductEllipsoid::new(vec![sphere(3), sphere(4)]).unwrap();
        assert_eq!(pe.offsets(), &[0..3, 3..7]);
        assert!(pe.stack(&[DVector::zeros(3)]).is_err());
    }

    #[test]
    fn two_sphere_projection() {
        let pe = ProductEllipsoid::new(vec![sphere(2), sphere(2)]).unwrap();
        let p = pe
            .point(DVector::from_vec(vec![1., 0., 1., 0.]), &PassCounter::new())
            .unwrap();
        let out = pe
            .project(&p, &DVector::from_vec(vec![5., 6., 7., 8.]))
            .unwrap();
        assert_eq!(out.as_slice(), &[0., 6., 0., 8.]);
    }

    #[test]
    fn normalize_each_block() {
        let pe = ProductEllipsoid::new(vec![sphere(2), sphere(1)]).unwrap();
        let p = pe
            .normalize(&DVector::from_vec(vec![3., 4., -2.]), &PassCounter::new())
            .unwrap();
        assert_eq!(p.x().as_slice(), &[0.6, 0.8, -1.0]);
    }
}

use nalgebra::DVector;

use crate::error::{ensure_dim, Error, Result};
use crate::geometry::{ProductEllipsoid, ProductPoint};
use crate::linops::{LinearOperator, PassCounter};

/// Block `A_ij` of the quadratic form, mapping block `col` into block `row`.
#[derive(Debug, Clone)]
pub struct QuadraticTerm {
    pub row: usize,
    pub col: usize,
    pub op: LinearOperator,
}

/// `f̄(x) = −½ xᵀAx − bᵀx` over a product of ellipsoids.
///
/// `A` is given as blocks and must be symmetric as a whole: each off-diagonal
/// block `A_ij` needs its transpose listed as `A_ji`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    manifold: ProductEllipsoid,
    terms: Vec<QuadraticTerm>,
    linear: Option<DVector<f64>>,
}

impl QuadraticProblem {
    pub fn new(
        manifold: ProductEllipsoid,
        terms: Vec<QuadraticTerm>,
        linear: Option<DVector<f64>>,
    ) -> Result<Self> {
        let k = manifold.components().len();
        for t in &terms {
            if t.row >= k || t.col >= k {
                return Err(Error::InvalidArgument(format!(
                    "term ({}, {}) outside {k} blocks",
                    t.row, t.col
                )));
            }
            ensure_dim("term rows", manifold.offsets()[t.row].len(), t.op.nrows())?;
            ensure_dim("term cols", manifold.offsets()[t.col].len(), t.op.ncols())?;
        }
        if let Some(b) = &linear {
            ensure_dim("linear term", manifold.dim(), b.len())?;
        }
        Ok(Self {
            manifold,
            terms,
            linear,
        })
    }

    pub fn manifold(&self) -> &ProductEllipsoid {
        &self.manifold
    }

    pub fn terms(&self) -> &[QuadraticTerm] {
        &self.terms
    }

    pub fn linear(&self) -> Option<&DVector<f64>> {
        self.linear.as_ref()
    }

    /// Same objective on a different manifold, typically the same constraint
    /// with another metric.
    pub fn with_manifold(&self, manifold: ProductEllipsoid) -> Result<Self> {
        Self::new(manifold, self.terms.clone(), self.linear.clone())
    }

    /// `A x`, stacked.
    pub fn quadratic_apply(&self, x: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        ensure_dim("quadratic apply", self.manifold.dim(), x.len())?;
        let offs = self.manifold.offsets();
        let mut out = DVector::zeros(x.len());
        for t in &self.terms {
            let (r, c) = (&offs[t.row], &offs[t.col]);
            let part = t.op.apply(&x.rows(c.start, c.len()).into_owned(), passes)?;
            let mut dst = out.rows_mut(r.start, r.len());
            dst += part;
        }
        Ok(out)
    }

    pub fn objective(&self, x: &DVector<f64>, passes: &PassCounter) -> Result<f64> {
        let ax = self.quadratic_apply(x, passes)?;
        Ok(-0.5 * x.dot(&ax) - self.linear.as_ref().map_or(0.0, |b| b.dot(x)))
    }

    /// `∇f̄(x) = −Ax − b`.
    pub fn egrad(&self, x: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        let mut g = -self.quadratic_apply(x, passes)?;
        if let Some(b) = &self.linear {
            g -= b;
        }
        Ok(g)
    }

    /// `∇²f̄ η = −Aη`.
    pub fn ehess_vec(&self, eta: &DVector<f64>, passes: &PassCounter) -> Result<DVector<f64>> {
        Ok(-self.quadratic_apply(eta, passes)?)
    }

    pub fn rgrad(&self, p: &ProductPoint, passes: &PassCounter) -> Result<DVector<f64>> {
        let eg = self.egrad(p.x(), passes)?;
        self.manifold.egrad_to_rgrad(p, &eg)
    }

    pub fn rhess(
        &self,
        p: &ProductPoint,
        eta: &DVector<f64>,
        passes: &PassCounter,
    ) -> Result<DVector<f64>> {
        let eg = self.egrad(p.x(), passes)?;
        let rg = self.manifold.egrad_to_rgrad(p, &eg)?;
        let he = self.ehess_vec(eta, passes)?;
        self.manifold.hess_apply(p, &eg, &he, eta, &rg, passes)
    }
}

/// Iterate with cached `Bᵢxᵢ` and `A_ij xⱼ`, advanced by recurrence so that a
/// step costs only the products with the search direction.
#[derive(Debug, Clone)]
pub(crate) struct IterateState {
    pub x: DVector<f64>,
    pub bx: Vec<DVector<f64>>,
    pub ax: Vec<DVector<f64>>,
}

/// Products of the search direction needed to evaluate the objective exactly
/// along the retraction curve `t ↦ R_x(t d)`.
#[derive(Debug, Clone)]
pub(crate) struct LineModel {
    pub d: DVector<f64>,
    pub bd: Vec<DVector<f64>>,
    pub ad: Vec<DVector<f64>>,
    /// per block: xᵀBx, xᵀBd, dᵀBd, bᵀx, bᵀd
    blocks: Vec<[f64; 5]>,
    /// per term: quadratic coefficients scaled by the start normalizers
    terms: Vec<(usize, usize, [f64; 3])>,
}

fn block(v: &DVector<f64>, r: &std::ops::Range<usize>) -> DVector<f64> {
    v.rows(r.start, r.len()).into_owned()
}

impl IterateState {
    pub fn new(problem: &QuadraticProblem, x: DVector<f64>, passes: &PassCounter) -> Result<Self> {
        let m = problem.manifold();
        ensure_dim("initial point", m.dim(), x.len())?;
        let offs = m.offsets();
        let bx = m
            .components()
            .iter()
            .zip(offs)
            .map(|(c, r)| c.b().apply(&block(&x, r), passes))
            .collect::<Result<Vec<_>>>()?;
        let ax = problem
            .terms()
            .iter()
            .map(|t| t.op.apply(&block(&x, &offs[t.col]), passes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { x, bx, ax })
    }

    pub fn point(&self, problem: &QuadraticProblem) -> Result<ProductPoint> {
        problem
            .manifold()
            .point_from_parts(self.x.clone(), self.bx.clone())
    }

    pub fn objective(&self, problem: &QuadraticProblem) -> f64 {
        let offs = problem.manifold().offsets();
        let quad: f64 = problem
            .terms()
            .iter()
            .zip(&self.ax)
            .map(|(t, ax)| block(&self.x, &offs[t.row]).dot(ax))
            .sum();
        -0.5 * quad - problem.linear().map_or(0.0, |b| b.dot(&self.x))
    }

    pub fn egrad(&self, problem: &QuadraticProblem) -> DVector<f64> {
        let offs = problem.manifold().offsets();
        let mut g = DVector::zeros(self.x.len());
        for (t, ax) in problem.terms().iter().zip(&self.ax) {
            let r = &offs[t.row];
            let mut dst = g.rows_mut(r.start, r.len());
            dst -= ax;
        }
        if let Some(b) = problem.linear() {
            g -= b;
        }
        g
    }

    pub fn line_model(
        &self,
        problem: &QuadraticProblem,
        d: DVector<f64>,
        passes: &PassCounter,
    ) -> Result<LineModel> {
        let m = problem.manifold();
        let offs = m.offsets();
        let bd = m
            .components()
            .iter()
            .zip(offs)
            .map(|(c, r)| c.b().apply(&block(&d, r), passes))
            .collect::<Result<Vec<_>>>()?;
        let ad = problem
            .terms()
            .iter()
            .map(|t| t.op.apply(&block(&d, &offs[t.col]), passes))
            .collect::<Result<Vec<_>>>()?;
        let blocks: Vec<[f64; 5]> = offs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let (xi, di) = (block(&self.x, r), block(&d, r));
                let (lx, ld) = problem
                    .linear()
                    .map_or((0.0, 0.0), |b| {
                        let bi = block(b, r);
                        (bi.dot(&xi), bi.dot(&di))
                    });
                [
                    xi.dot(&self.bx[i]),
                    xi.dot(&bd[i]),
                    di.dot(&bd[i]),
                    lx,
                    ld,
                ]
            })
            .collect();
        if blocks.iter().any(|b| !(b[0] > 0.0)) {
            return Err(Error::DegenerateStep(0.0));
        }
        let terms = problem
            .terms()
            .iter()
            .enumerate()
            .map(|(p, t)| {
                let (xr, dr) = (block(&self.x, &offs[t.row]), block(&d, &offs[t.row]));
                let scale = (blocks[t.row][0] * blocks[t.col][0]).sqrt();
                let q0 = xr.dot(&self.ax[p]);
                let q1 = xr.dot(&ad[p]) + dr.dot(&self.ax[p]);
                let q2 = dr.dot(&ad[p]);
                (t.row, t.col, [q0 / scale, q1 / scale, q2 / scale])
            })
            .collect();
        Ok(LineModel {
            d,
            bd,
            ad,
            blocks,
            terms,
        })
    }

    /// Moves to `R_x(t d)`. Returns the unnormalized `y = x + t d` and `By`
    /// per block, as needed by vector transport.
    pub fn advance(
        &mut self,
        problem: &QuadraticProblem,
        model: &LineModel,
        t: f64,
    ) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        let offs = problem.manifold().offsets();
        let mut moved = Vec::with_capacity(offs.len());
        let mut scales = Vec::with_capacity(offs.len());
        for (i, r) in offs.iter().enumerate() {
            let y = block(&self.x, r) + block(&model.d, r) * t;
            let by = &self.bx[i] + &model.bd[i] * t;
            let c = y.dot(&by).max(0.0).sqrt();
            if !(c >= crate::geometry::DEGENERATE_GUARD) {
                return Err(Error::DegenerateStep(c));
            }
            scales.push(c);
            moved.push((y, by));
        }
        for (i, r) in offs.iter().enumerate() {
            let (y, by) = &moved[i];
            self.x.rows_mut(r.start, r.len()).copy_from(&(y / scales[i]));
            self.bx[i] = by / scales[i];
        }
        for (p, term) in problem.terms().iter().enumerate() {
            self.ax[p] = (&self.ax[p] + &model.ad[p] * t) / scales[term.col];
        }
        // pin each block back onto its ellipsoid
        for (i, r) in offs.iter().enumerate() {
            let n = block(&self.x, r).dot(&self.bx[i]).sqrt();
            let mut xi = self.x.rows_mut(r.start, r.len());
            xi /= n;
            self.bx[i] /= n;
            scales[i] = n;
        }
        for (p, term) in problem.terms().iter().enumerate() {
            self.ax[p] /= scales[term.col];
        }
        Ok(moved)
    }
}

impl LineModel {
    /// `ĉᵢ(t) − 1` where `ĉᵢ(t) = ‖xᵢ + t dᵢ‖_B / ‖xᵢ‖_B`, computed without cancellation.
    fn scale_minus_one(&self, i: usize, t: f64) -> f64 {
        let [xbx, xbd, dbd, _, _] = self.blocks[i];
        let e = (2.0 * t * xbd + t * t * dbd) / xbx;
        e / ((1.0 + e).max(0.0).sqrt() + 1.0)
    }

    /// `f(R_x(t d)) − f(x)`.
    pub fn delta(&self, t: f64) -> f64 {
        let em1: Vec<f64> = (0..self.blocks.len())
            .map(|i| self.scale_minus_one(i, t))
            .collect();
        let mut delta = 0.0;
        for &(i, j, [q0, q1, q2]) in &self.terms {
            let (a, b) = (em1[i], em1[j]);
            let prod = (1.0 + a) * (1.0 + b);
            let inv_minus_one = -(a + b + a * b) / prod;
            delta -= 0.5 * (q0 * inv_minus_one + (t * q1 + t * t * q2) / prod);
        }
        for (i, blk) in self.blocks.iter().enumerate() {
            let c0 = blk[0].sqrt();
            let (l0, l1) = (blk[3] / c0, blk[4] / c0);
            let a = em1[i];
            delta -= l0 * (-a / (1.0 + a)) + t * l1 / (1.0 + a);
        }
        delta
    }
}

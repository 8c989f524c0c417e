//! CountSketch embeddings and sketch-quality diagnostics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::linops::{DataMatrix, PassCounter};
use crate::par::{self, Execution};

/// Rows per partial accumulator are at least this many; the row partition
/// depends only on `n`, never on the thread count.
const APPLY_CHUNK_ROWS: usize = 2048;
const MAX_APPLY_CHUNKS: usize = 16;

/// Sparse `s × n` embedding with one signed nonzero per column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSketch {
    s: usize,
    buckets: Vec<u32>,
    signs: Vec<i8>,
    seed: Option<u64>,
}

/// Which constant to use for the recommended sketch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchTarget {
    Cca,
    Lda,
}

impl CountSketch {
    pub fn new(n: usize, s: usize, seed: u64) -> Result<Self> {
        if s < 1 || n < 1 {
            return Err(Error::InvalidArgument(format!(
                "count sketch needs n >= 1 and s >= 1 (got n = {n}, s = {s})"
            )));
        }
        if s > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!("sketch size {s} too large")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buckets = Vec::with_capacity(n);
        let mut signs = Vec::with_capacity(n);
        for _ in 0..n {
            buckets.push(rng.random_range(0..s as u32));
            signs.push(if rng.random::<bool>() { 1 } else { -1 });
        }
        Ok(Self {
            s,
            buckets,
            signs,
            seed: Some(seed),
        })
    }

    /// Sketch with explicit 0-based bucket and sign maps.
    pub fn from_maps(s: usize, buckets: Vec<usize>, signs: Vec<i8>) -> Result<Self> {
        ensure_dim("sketch sign map", buckets.len(), signs.len())?;
        if s < 1 || buckets.is_empty() {
            return Err(Error::InvalidArgument("empty count sketch".into()));
        }
        if let Some(&b) = buckets.iter().find(|&&b| b >= s) {
            return Err(Error::InvalidArgument(format!("bucket {b} >= s = {s}")));
        }
        if signs.iter().any(|&g| g != 1 && g != -1) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        Ok(Self {
            s,
            buckets: buckets.into_iter().map(|b| b as u32).collect(),
            signs,
            seed: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.buckets.len()
    }

    pub fn sketch_dim(&self) -> usize {
        self.s
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// 0-based bucket of input row `j`.
    pub fn bucket(&self, j: usize) -> usize {
        self.buckets[j] as usize
    }

    pub fn sign(&self, j: usize) -> f64 {
        f64::from(self.signs[j])
    }

    /// `S z` for a single vector.
    pub fn apply_vector(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("sketch vector", self.input_dim(), z.len())?;
        let mut out = DVector::zeros(self.s);
        for (j, &v) in z.iter().enumerate() {
            out[self.bucket(j)] += self.sign(j) * v;
        }
        Ok(out)
    }

    /// `S Z` in a single pass over `Z`.
    pub fn apply(&self, z: &DataMatrix, passes: &PassCounter) -> Result<DMatrix<f64>> {
        self.apply_with(z, passes, Execution::default())
    }

    pub fn apply_with(
        &self,
        z: &DataMatrix,
        passes: &PassCounter,
        exec: Execution,
    ) -> Result<DMatrix<f64>> {
        let n = z.nrows();
        ensure_dim("sketch rows", self.input_dim(), n)?;
        passes.record(1);
        let chunk = APPLY_CHUNK_ROWS.max(n.div_ceil(MAX_APPLY_CHUNKS));
        let nchunks = n.div_ceil(chunk);
        let partials = par::map_indexed(nchunks, exec, |c| {
            let rows = c * chunk..((c + 1) * chunk).min(n);
            self.accumulate(z, rows)
        });
        let mut out = DMatrix::zeros(self.s, z.ncols());
        for p in partials {
            out += p;
        }
        if let DataMatrix::ClassCentered(cc) = z {
            // subtract S·(class indicator)·means
            let l = cc.means().nrows();
            let mut counts = DMatrix::<f64>::zeros(self.s, l);
            for (j, &k) in cc.classes().iter().enumerate() {
                counts[(self.bucket(j), k)] += self.sign(j);
            }
            out -= counts * cc.means();
        }
        Ok(out)
    }

    fn accumulate(&self, z: &DataMatrix, rows: std::ops::Range<usize>) -> DMatrix<f64> {
        let d = z.ncols();
        // row-major scratch so each row lands contiguously
        let mut acc = vec![0.0; self.s * d];
        match z {
            DataMatrix::Sparse(m) => {
                for i in rows {
                    let base = self.bucket(i) * d;
                    let g = self.sign(i);
                    let (cols, vals) = m.row(i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc[base + c] += g * v;
                    }
                }
            }
            DataMatrix::ClassCentered(cc) => {
                let m = cc.data();
                for i in rows {
                    let base = self.bucket(i) * d;
                    let g = self.sign(i);
                    let (cols, vals) = m.row(i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc[base + c] += g * v;
                    }
                }
            }
            DataMatrix::Dense(m) => {
                for i in rows {
                    let base = self.bucket(i) * d;
                    let g = self.sign(i);
                    for c in 0..d {
                        acc[base + c] += g * m[(i, c)];
                    }
                }
            }
        }
        DMatrix::from_row_slice(self.s, d, &acc)
    }

    /// Dense `s × n` matrix. Tests only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.s, self.input_dim());
        for j in 0..self.input_dim() {
            out[(self.bucket(j), j)] = self.sign(j);
        }
        out
    }
}

/// `s_λ(Z) = Tr((ZᵀZ + λI)⁻¹ ZᵀZ)`. Dense diagnostic only.
pub fn effective_dimension(z: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge {lambda} must be >= 0")));
    }
    let d = z.ncols();
    let g = z.tr_mul(z);
    let chol = (&g + DMatrix::identity(d, d) * lambda)
        .cholesky()
        .ok_or_else(|| Error::NotSpd("ZᵀZ + λI is singular".into()))?;
    Ok(chol.solve(&g).trace())
}

/// `⌈c · s_eff² / δ⌉` with `c = 40` for CCA and `c = 20` for LDA.
pub fn recommended_sketch_size(s_eff: f64, delta: f64, target: SketchTarget) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta {delta} outside (0, 1)")));
    }
    if !(s_eff >= 0.0 && s_eff.is_finite()) {
        return Err(Error::InvalidArgument(format!("effective dimension {s_eff}")));
    }
    let c = match target {
        SketchTarget::Cca => 40.0,
        SketchTarget::Lda => 20.0,
    };
    let raw = c * s_eff * s_eff / delta;
    // absorb representation error such as 40·4/0.1 = 1600.0000000000002
    let size = (raw * (1.0 - 1e-12)).ceil();
    if size > usize::MAX as f64 {
        return Err(Error::InvalidArgument("recommended size overflows".into()));
    }
    Ok((size as usize).max(1))
}

/// `κ(A, B) = κ(B^{-1/2} A B^{-1/2})`, the ratio of extreme absolute
/// generalized eigenvalues. Dense diagnostic only.
pub fn pencil_condition_number(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let vals = pencil_eigenvalues(a, b)?;
    let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = vals.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Generalized eigenvalues of the symmetric-definite pencil `(A, B)`, ascending.
pub fn pencil_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::dims("pencil", a.nrows(), b.nrows()));
    }
    let bs = (b + b.transpose()) * 0.5;
    let l = bs
        .cholesky()
        .ok_or_else(|| Error::NotSpd("pencil right-hand matrix".into()))?
        .l();
    let as_ = (a + a.transpose()) * 0.5;
    let y = l
        .solve_lower_triangular(&as_)
        .ok_or_else(|| Error::Numerical("triangular solve".into()))?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical("triangular solve".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut vals: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(DVector::from_vec(vals))
}

/// `κ(ZᵀZ + λI, (SZ)ᵀ(SZ) + λI)` for one CountSketch per seed.
pub fn sketched_condition_numbers(
    z: &DataMatrix,
    lambda: f64,
    s: usize,
    seeds: &[u64],
    exec: Execution,
) -> Result<Vec<f64>> {
    let d = z.ncols();
    let exact = z.gram_dense() + DMatrix::identity(d, d) * lambda;
    let per_seed = par::map_slice(seeds, exec, |&seed| -> Result<f64> {
        let sk = CountSketch::new(z.nrows(), s, seed)?;
        let zs = sk.apply_with(z, &PassCounter::new(), Execution::Sequential)?;
        let approx = zs.tr_mul(&zs) + DMatrix::identity(d, d) * lambda;
        pencil_condition_number(&exact, &approx)
    });
    per_seed.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::SparseMatrix;
    use approx::assert_relative_eq;

    #[test]
    fn single_bucket() {
        let s = CountSketch::new(1, 1, 7).unwrap();
        assert_eq!(s.bucket(0), 0);
        assert!(s.sign(0) == 1.0 || s.sign(0) == -1.0);
        assert!(CountSketch::new(3, 0, 1).is_err());
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(
            CountSketch::new(500, 17, 42).unwrap(),
            CountSketch::new(500, 17, 42).unwrap()
        );
        assert_ne!(
            CountSketch::new(500, 17, 42).unwrap(),
            CountSketch::new(500, 17, 43).unwrap()
        );
    }

    #[test]
    fn hand_example() {
        let sk = CountSketch::from_maps(2, vec![0, 1, 0, 1], vec![1, -1, 1, 1]).unwrap();
        let z: DataMatrix = DMatrix::from_column_slice(4, 1, &[1., 2., 3., 4.]).into();
        let pc = PassCounter::new();
        let out = sk.apply(&z, &pc).unwrap();
        assert_eq!(out.as_slice(), &[4., 2.]);
        assert_eq!(pc.get(), 1);
        let zero: DataMatrix = SparseMatrix::zeros(4, 3).into();
        assert_eq!(sk.apply(&zero, &pc).unwrap(), DMatrix::zeros(2, 3));
    }

    #[test]
    fn sizes() {
        assert_eq!(recommended_sketch_size(1.0, 0.5, SketchTarget::Lda).unwrap(), 40);
        assert_eq!(recommended_sketch_size(2.0, 0.1, SketchTarget::Cca).unwrap(), 1600);
        assert!(recommended_sketch_size(2.0, 1.0, SketchTarget::Cca).is_err());
        assert!(recommended_sketch_size(2.0, 0.0, SketchTarget::Lda).is_err());
    }

    #[test]
    fn effective_dimension_orthonormal() {
        let q = DMatrix::from_row_slice(4, 2, &[1., 0., 0., 1., 0., 0., 0., 0.]);
        assert_relative_eq!(effective_dimension(&q, 0.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(effective_dimension(&q, 1.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn pencil_trivial() {
        let a = DMatrix::from_row_slice(2, 2, &[2., 1., 1., 3.]);
        assert_relative_eq!(pencil_condition_number(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4., 1.]));
        assert_relative_eq!(
            pencil_condition_number(&d, &DMatrix::identity(2, 2)).unwrap(),
            4.0,
            epsilon = 1e-14
        );
        assert!(pencil_condition_number(&d, &-DMatrix::<f64>::identity(2, 2)).is_err());
    }
}

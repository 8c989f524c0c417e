//! Seeded synthetic instances.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Two views sharing `latent` Gaussian factors of decreasing strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaSpec {
    pub n: usize,
    pub dx: usize,
    pub dy: usize,
    pub latent: usize,
    pub noise: f64,
    /// Columns are scaled geometrically from 1 down to `10^-col_decades`.
    pub col_decades: f64,
    pub seed: u64,
}

impl Default for CcaSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            dx: 20,
            dy: 20,
            latent: 3,
            noise: 1.0,
            col_decades: 0.0,
            seed: 0,
        }
    }
}

/// `l` Gaussian blobs in `d` dimensions with means at distance `separation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaSpec {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub separation: f64,
    pub col_decades: f64,
    pub seed: u64,
}

impl Default for LdaSpec {
    fn default() -> Self {
        Self {
            n: 3000,
            d: 15,
            classes: 3,
            separation: 2.0,
            col_decades: 0.0,
            seed: 0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

fn scale_columns(m: &mut DMatrix<f64>, decades: f64) {
    let d = m.ncols();
    if decades == 0.0 || d < 2 {
        return;
    }
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= 10f64.powf(-decades * j as f64 / (d - 1) as f64);
    }
}

pub fn correlated_views(spec: &CcaSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut z = gaussian(spec.n, spec.latent, &mut rng);
    for (k, mut col) in z.column_iter_mut().enumerate() {
        col *= 1.0 / (k + 1) as f64;
    }
    let wx = gaussian(spec.latent, spec.dx, &mut rng);
    let wy = gaussian(spec.latent, spec.dy, &mut rng);
    let mut x = &z * wx + gaussian(spec.n, spec.dx, &mut rng) * spec.noise;
    let mut y = &z * wy + gaussian(spec.n, spec.dy, &mut rng) * spec.noise;
    scale_columns(&mut x, spec.col_decades);
    scale_columns(&mut y, spec.col_decades);
    (x, y)
}

/// Returns the data and 0-based class labels, classes assigned round-robin.
pub fn gaussian_blobs(spec: &LdaSpec) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<DVector<f64>> = (0..spec.classes)
        .map(|_| {
            let v = DVector::from_fn(spec.d, |_, _| normal(&mut rng));
            v.normalize() * spec.separation
        })
        .collect();
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.classes.max(1)).collect();
    let mut x = DMatrix::from_fn(spec.n, spec.d, |i, j| means[labels[i]][j] + normal(&mut rng));
    scale_columns(&mut x, spec.col_decades);
    (x, labels)
}

/// Random sparse matrix with the given density and entries in `[-1, 1)`.
pub fn sparse_uniform(rows: usize, cols: usize, density: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < density {
            rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    })
}

//! Dense and sparse storage plus the implicit operators built on them.
//!
//! Dense matrices and vectors are nalgebra's `DMatrix<f64>` (column-major) and
//! `DVector<f64>`. Sparse data is CSR only.

mod data;
mod operator;
mod passes;
mod sparse;

pub use data::{ClassCentered, DataMatrix};
pub use operator::{cross_gram_apply, gram_apply, LinearOperator};
pub use passes::PassCounter;
pub use sparse::SparseMatrix;

use nalgebra::DVector;

/// Relative error `‖a − b‖ / max(1, ‖b‖)`.
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

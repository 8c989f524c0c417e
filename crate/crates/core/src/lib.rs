//! Riemannian optimization on ellipsoids with randomized preconditioning,
//! specialized to top-1 CCA and LDA.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cca;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod lda;
pub mod linops;
pub mod par;
pub mod preconditioners;
pub mod sketching;
pub mod solvers;

pub use error::{Error, Result};

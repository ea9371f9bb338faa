//! Dense linear algebra for small and medium problems.
//!
//! Everything here works on a single row-major [`DenseMatrix`] type. The
//! eigensolvers are cyclic Jacobi (two-sided for symmetric matrices,
//! one-sided for the SVD), which trades speed for accuracy on the few-hundred
//! dimension problems this crate is used for.

mod eigen;
mod matrix;
mod svd;

pub use eigen::{generalized_eig_smallest, sym_eig, sym_eig_smallest, Eigen, DEFAULT_RIDGE};
pub use matrix::DenseMatrix;
pub use svd::{pinv, svd, Svd};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite after ridge {ridge:e} (condition estimate {condition_estimate:e})")]
    NotPositiveDefinite { ridge: f64, condition_estimate: f64 },
    #[error("{routine} did not converge after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence {
        routine: &'static str,
        sweeps: usize,
        residual: f64,
    },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

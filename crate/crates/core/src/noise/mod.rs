//! Stationary Gaussian noise: covariance kernels `N_ij(|t − t′|)`, their
//! assembly on a grid, and seeded path sampling.

mod covariance;
mod kernels;
mod sampling;
mod special;

pub use covariance::{assemble_covariance, CovarianceFactor, CovarianceMatrix, LagTable};
pub use kernels::{
    kernel_registry, CovarianceKernel, DiagonalConstant, KernelFamily, Mat3, NoiseKernel, OneOverF, UserMatrix,
};
pub use sampling::{sample_paths, NoiseSampleSet, NoiseSampler};
pub use special::exp_integral_e1;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("E1 is defined for x > 0, got {0}")]
    DomainError(f64),
    #[error("covariance is not positive semidefinite (most negative eigenvalue estimate {min_eigen:e}, max diagonal {max_diag:e})")]
    NotPSD { min_eigen: f64, max_diag: f64 },
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Unknown(#[from] crate::registry::UnknownEntry),
}

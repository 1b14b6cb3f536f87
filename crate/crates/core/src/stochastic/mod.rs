//! Densities, reproducible random streams and weight arithmetic.

mod gaussian;
mod rng;
mod uniform;
mod weights;

pub use gaussian::GaussianDensity;
pub use rng::{derive_seed, mix64, RngStream};
pub use uniform::UniformBoxDensity;
pub use weights::{effective_sample_size, normalize_logweights, Ess, LogWeights};

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StochasticError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance is not symmetric")]
    NotSymmetric,
    #[error("covariance is not positive semidefinite")]
    NotPsd,
    #[error("covariance is singular")]
    Singular,
    #[error("box half-widths must be positive and finite")]
    NonPositiveWidth,
    #[error("sample count must be at least one")]
    InvalidCount,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("every weight is zero (log-weight -inf)")]
    Degenerate,
}

/// A density that can be sampled and evaluated in log space.
pub trait Density {
    fn dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>, StochasticError>;
    fn logpdf(&self, x: &DVector<f64>) -> Result<f64, StochasticError>;
}

/// Weighted mean and covariance `Σ w (x − m)(x − m)ᵀ`.
pub fn weighted_moments(particles: &[DVector<f64>], weights: &[f64]) -> (DVector<f64>, nalgebra::DMatrix<f64>) {
    let n = particles[0].len();
    let mut mean = DVector::zeros(n);
    for (x, w) in particles.iter().zip(weights) {
        mean.axpy(*w, x, 1.0);
    }
    let mut cov = nalgebra::DMatrix::zeros(n, n);
    for (x, w) in particles.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let d = x - &mean;
        cov.ger(*w, &d, &d, 1.0);
    }
    (mean, cov)
}

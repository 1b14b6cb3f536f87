use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Density, RngStream, StochasticError};

/// Multivariate normal with a cached lower-triangular factor.
///
/// Semidefinite covariances are accepted: a zero pivot yields a zero
/// column in the factor, so sampling works while `logpdf` reports
/// [`StochasticError::Singular`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    log_det: Option<f64>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, StochasticError> {
    let n = cov.nrows();
    let scale = (0..n).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = cov[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = cov[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d < -tol * 1e3 {
            return Err(StochasticError::NotPsd);
        }
    }
    let resid = (&l * l.transpose() - cov).norm();
    if resid > 1e-10 * cov.norm().max(f64::MIN_POSITIVE) {
        return Err(StochasticError::NotPsd);
    }
    Ok(l)
}

impl GaussianDensity {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, StochasticError> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(StochasticError::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(StochasticError::NonFinite);
        }
        let scale = cov.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(StochasticError::NotSymmetric);
                }
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let factor = psd_factor(&cov)?;
        let diag_min = (0..n).map(|i| factor[(i, i)]).fold(f64::INFINITY, f64::min);
        let log_det = if n == 0 || diag_min > 0.0 {
            Some(2.0 * (0..n).map(|i| factor[(i, i)].ln()).sum::<f64>())
        } else {
            None
        };
        Ok(GaussianDensity {
            mean,
            cov,
            factor,
            log_det,
        })
    }

    /// Symmetrizes `cov` before construction; for covariances assembled
    /// from sums that are symmetric only up to rounding.
    pub fn new_symmetrized(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, StochasticError> {
        let sym = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, sym)
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity is PD")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower-triangular `S` with `S Sᵀ = cov`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn is_degenerate(&self) -> bool {
        self.log_det.is_none()
    }

    /// `(x - μ)ᵀ Σ⁻¹ (x - μ)`.
    pub fn mahalanobis2(&self, x: &DVector<f64>) -> Result<f64, StochasticError> {
        if x.len() != self.mean.len() {
            return Err(StochasticError::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        if self.log_det.is_none() {
            return Err(StochasticError::Singular);
        }
        let d = x - &self.mean;
        let z = self
            .factor
            .solve_lower_triangular(&d)
            .ok_or(StochasticError::Singular)?;
        Ok(z.norm_squared())
    }
}

impl Density for GaussianDensity {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>, StochasticError> {
        if n == 0 {
            return Err(StochasticError::InvalidCount);
        }
        let d = self.mean.len();
        Ok((0..n)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mean + &self.factor * z
            })
            .collect())
    }

    fn logpdf(&self, x: &DVector<f64>) -> Result<f64, StochasticError> {
        let q = self.mahalanobis2(x)?;
        let log_det = self.log_det.ok_or(StochasticError::Singular)?;
        Ok(-0.5 * (self.mean.len() as f64 * LN_2PI + log_det + q))
    }
}

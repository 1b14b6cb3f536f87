use nalgebra::DVector;
use rand::Rng;

use super::{Density, RngStream, StochasticError};

/// Uniform density on an axis-aligned box `center ± half_widths`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformBoxDensity {
    center: DVector<f64>,
    half_widths: DVector<f64>,
    log_density: f64,
}

impl UniformBoxDensity {
    pub fn new(center: DVector<f64>, half_widths: DVector<f64>) -> Result<Self, StochasticError> {
        if center.len() != half_widths.len() {
            return Err(StochasticError::DimensionMismatch {
                expected: center.len(),
                got: half_widths.len(),
            });
        }
        if half_widths.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(StochasticError::NonPositiveWidth);
        }
        let log_density = -half_widths.iter().map(|h| (2.0 * h).ln()).sum::<f64>();
        Ok(UniformBoxDensity {
            center,
            half_widths,
            log_density,
        })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn half_widths(&self) -> &DVector<f64> {
        &self.half_widths
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.center.iter().zip(self.half_widths.iter()))
            .all(|(v, (c, h))| (v - c).abs() <= *h)
    }
}

impl Density for UniformBoxDensity {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>, StochasticError> {
        if n == 0 {
            return Err(StochasticError::InvalidCount);
        }
        Ok((0..n)
            .map(|_| {
                DVector::from_fn(self.center.len(), |i, _| {
                    let u: f64 = rng.random();
                    self.center[i] + self.half_widths[i] * (2.0 * u - 1.0)
                })
            })
            .collect())
    }

    fn logpdf(&self, x: &DVector<f64>) -> Result<f64, StochasticError> {
        if x.len() != self.center.len() {
            return Err(StochasticError::DimensionMismatch {
                expected: self.center.len(),
                got: x.len(),
            });
        }
        Ok(if self.contains(x) {
            self.log_density
        } else {
            f64::NEG_INFINITY
        })
    }
}

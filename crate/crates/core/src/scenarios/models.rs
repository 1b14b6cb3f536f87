//! Dynamics and measurement models written once over [`Scalar`].
//!
//! Process and measurement noise are additive throughout: the models
//! describe the deterministic part only.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::polyalg::{PolyError, Scalar, Space, TruncatedPolynomial};

use super::integrate::rk4;
use super::orbit::OrbitModel;
use super::ScenarioError;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicsModel {
    /// The state does not move.
    Static,
    /// `x ← F x + u`.
    Linear { matrix: Vec<Vec<f64>>, forcing: Vec<f64> },
    /// `x ← a x + b x / (1 + x²) + c cos(ω k)`, with `k` the step being left.
    Bimodal { a: f64, b: f64, c: f64, omega: f64 },
    /// Continuous gravity field, integrated over the observation interval.
    Orbit(OrbitModel),
}

impl DynamicsModel {
    /// State dimension the model expects, when it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            DynamicsModel::Static => None,
            DynamicsModel::Linear { matrix, .. } => Some(matrix.len()),
            DynamicsModel::Bimodal { .. } => Some(1),
            DynamicsModel::Orbit(_) => Some(6),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, DynamicsModel::Static)
    }

    /// True when the flow's Jacobian determinant does not depend on the
    /// state, so densities can be pulled back without a volume factor.
    pub fn has_constant_jacobian(&self) -> bool {
        !matches!(self, DynamicsModel::Bimodal { .. })
    }

    /// Inverse of [`DynamicsModel::propagate`]: the state at `t0` that
    /// reaches `x` at `t1`. For the orbit, backward integration seeds a
    /// chord iteration on the forward map, so the round trip is exact to
    /// roundoff rather than to the integrator's truncation error.
    pub fn propagate_back(&self, x: &[f64], k: usize, t0: f64, t1: f64) -> Result<Vec<f64>, ScenarioError> {
        match self {
            DynamicsModel::Static => Ok(x.to_vec()),
            DynamicsModel::Linear { matrix, forcing } => {
                check_len(x.len(), matrix.len())?;
                let n = matrix.len();
                let a = nalgebra::DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                let b = nalgebra::DVector::from_fn(n, |i, _| x[i] - forcing[i]);
                a.lu()
                    .solve(&b)
                    .map(|v| v.as_slice().to_vec())
                    .ok_or_else(|| ScenarioError::Invalid("singular transition matrix".into()))
            }
            DynamicsModel::Bimodal { .. } => Err(ScenarioError::Invalid("the growth model is not invertible".into())),
            DynamicsModel::Orbit(m) => {
                check_len(x.len(), 6)?;
                let mut x0 = rk4(|_, s: &[f64]| m.rhs(s), t1, t0, x.to_vec(), m.step_for(t1 - t0))?;
                // The Jacobian is taken once, at the backward-integrated guess.
                let space = Space::new(6, 1)?;
                let vars = (0..6)
                    .map(|i| TruncatedPolynomial::variable(&space, i).map(|v| v.add_scalar(x0[i])))
                    .collect::<Result<Vec<_>, _>>()?;
                let fwd = self.propagate(&vars, k, t0, t1)?;
                let lu = nalgebra::DMatrix::from_fn(6, 6, |i, j| fwd[i].linear_coeff(j)).lu();
                let mut image: Vec<f64> = fwd.iter().map(|p| p.constant_part()).collect();
                for _ in 0..NEWTON_ITERATIONS {
                    let r = nalgebra::DVector::from_fn(6, |i, _| image[i] - x[i]);
                    let dx = lu
                        .solve(&r)
                        .ok_or_else(|| ScenarioError::Invalid("singular flow Jacobian".into()))?;
                    for (a, d) in x0.iter_mut().zip(dx.iter()) {
                        *a -= d;
                    }
                    let scale = x0.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                    if dx.amax() <= 1e-14 * scale {
                        break;
                    }
                    image = self.propagate(&x0, k, t0, t1)?;
                }
                Ok(x0)
            }
        }
    }

    /// Deterministic propagation of `x` from step `k` at time `t0` to `t1`.
    pub fn propagate<S: Scalar>(&self, x: &[S], k: usize, t0: f64, t1: f64) -> Result<Vec<S>, ScenarioError> {
        match self {
            DynamicsModel::Static => Ok(x.to_vec()),
            DynamicsModel::Linear { matrix, forcing } => {
                check_len(x.len(), matrix.len())?;
                Ok(matrix
                    .iter()
                    .zip(forcing)
                    .map(|(row, u)| {
                        row.iter()
                            .zip(x)
                            .filter(|(a, _)| **a != 0.0)
                            .fold(x[0].lift(*u), |acc, (a, xi)| acc + xi.clone() * *a)
                    })
                    .collect())
            }
            DynamicsModel::Bimodal { a, b, c, omega } => {
                check_len(x.len(), 1)?;
                let v = &x[0];
                let den = (v.clone() * v.clone() + 1.0).recip()?;
                let forcing = c * (omega * k as f64).cos();
                Ok(vec![v.clone() * *a + v.clone() * den * *b + forcing])
            }
            DynamicsModel::Orbit(m) => {
                check_len(x.len(), 6)?;
                rk4(|_, s: &[S]| m.rhs(s), t0, t1, x.to_vec(), m.step_for(t1 - t0))
            }
        }
    }
}

const NEWTON_ITERATIONS: usize = 8;

fn check_len(got: usize, expected: usize) -> Result<(), ScenarioError> {
    if got != expected {
        return Err(ScenarioError::Dimension { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementModel {
    /// `(‖(x₀, x₁)‖, atan2(x₁, x₀))` from a sensor at the origin.
    RangeBearing,
    /// `‖(x₀, x₁)‖`.
    Range,
    /// `atan2(x₁, x₀)`.
    Bearing,
    /// Geocentric `(‖r‖, atan2(r₁, r₀), asin(r₂ / ‖r‖))` of the position `r = x[0..3]`.
    RangeAzimuthElevation,
    /// `x₀² / scale`.
    Quadratic { scale: f64 },
    /// Direct observation of the listed state components.
    Components { indices: Vec<usize> },
    /// `A x`.
    Linear { matrix: Vec<Vec<f64>> },
}

impl MeasurementModel {
    pub fn dim(&self) -> usize {
        match self {
            MeasurementModel::RangeBearing => 2,
            MeasurementModel::Range | MeasurementModel::Bearing | MeasurementModel::Quadratic { .. } => 1,
            MeasurementModel::RangeAzimuthElevation => 3,
            MeasurementModel::Components { indices } => indices.len(),
            MeasurementModel::Linear { matrix } => matrix.len(),
        }
    }

    /// Smallest state dimension the model can read.
    pub fn min_state_dim(&self) -> usize {
        match self {
            MeasurementModel::RangeBearing | MeasurementModel::Range | MeasurementModel::Bearing => 2,
            MeasurementModel::RangeAzimuthElevation => 3,
            MeasurementModel::Quadratic { .. } => 1,
            MeasurementModel::Components { indices } => indices.iter().max().map_or(0, |m| m + 1),
            MeasurementModel::Linear { matrix } => matrix.first().map_or(0, |r| r.len()),
        }
    }

    /// Which outputs are angles (residuals wrapped to `(-π, π]`).
    pub fn angle_mask(&self) -> Vec<bool> {
        match self {
            MeasurementModel::RangeBearing => vec![false, true],
            MeasurementModel::Bearing => vec![true],
            MeasurementModel::RangeAzimuthElevation => vec![false, true, true],
            _ => vec![false; self.dim()],
        }
    }

    pub fn measure<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>, PolyError> {
        if x.len() < self.min_state_dim() {
            return Err(PolyError::LengthMismatch {
                expected: self.min_state_dim(),
                got: x.len(),
            });
        }
        let planar_range = || (x[0].clone() * x[0].clone() + x[1].clone() * x[1].clone()).sqrt();
        match self {
            MeasurementModel::RangeBearing => Ok(vec![planar_range()?, x[1].atan2(&x[0])?]),
            MeasurementModel::Range => Ok(vec![planar_range()?]),
            MeasurementModel::Bearing => Ok(vec![x[1].atan2(&x[0])?]),
            MeasurementModel::RangeAzimuthElevation => {
                let r = (x[0].clone() * x[0].clone() + x[1].clone() * x[1].clone() + x[2].clone() * x[2].clone())
                    .sqrt()?;
                let az = x[1].atan2(&x[0])?;
                let el = x[2].div(&r)?.asin()?;
                Ok(vec![r, az, el])
            }
            MeasurementModel::Quadratic { scale } => Ok(vec![x[0].clone() * x[0].clone() * (1.0 / scale)]),
            MeasurementModel::Components { indices } => Ok(indices.iter().map(|&i| x[i].clone()).collect()),
            MeasurementModel::Linear { matrix } => Ok(matrix
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(x)
                        .fold(x[0].lift(0.0), |acc, (a, xi)| acc + xi.clone() * *a)
                })
                .collect()),
        }
    }

    /// `y - ỹ` with angle components wrapped.
    pub fn residual(&self, y: &[f64], observed: &[f64]) -> Vec<f64> {
        wrap_masked(&self.angle_mask(), y, observed)
    }
}

/// `a - b` with the masked components wrapped to `(-π, π]`.
pub fn wrap_masked(mask: &[bool], a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(mask)
        .map(|((x, y), &ang)| if ang { wrap_angle(x - y) } else { x - y })
        .collect()
}

//! Fixed-step Runge-Kutta over any [`Scalar`], so the same right-hand side
//! propagates a single state or a polynomial flow expansion.

use crate::polyalg::{PolyError, PolynomialMap, Scalar, TruncatedPolynomial};

use super::ScenarioError;

fn axpy<S: Scalar>(x: &[S], h: f64, k: &[S]) -> Vec<S> {
    x.iter().zip(k).map(|(a, b)| a.clone() + b.clone() * h).collect()
}

/// Classic fourth-order Runge-Kutta from `t0` to `t1` with steps no longer
/// than `max_step`.
pub fn rk4<S, F>(rhs: F, t0: f64, t1: f64, x0: Vec<S>, max_step: f64) -> Result<Vec<S>, ScenarioError>
where
    S: Scalar,
    F: Fn(f64, &[S]) -> Result<Vec<S>, PolyError>,
{
    if !(max_step > 0.0) || !t0.is_finite() || !t1.is_finite() {
        return Err(ScenarioError::Invalid(format!(
            "integration interval [{t0}, {t1}] with step {max_step}"
        )));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(x0);
    }
    let n = (span.abs() / max_step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut x = x0;
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let k1 = rhs(t, &x)?;
        let k2 = rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k1))?;
        let k3 = rhs(t + 0.5 * h, &axpy(&x, 0.5 * h, &k2))?;
        let k4 = rhs(t + h, &axpy(&x, h, &k3))?;
        x = x
            .iter()
            .enumerate()
            .map(|(j, xj)| {
                let incr = k1[j].clone() + (k2[j].clone() + k3[j].clone()) * 2.0 + k4[j].clone();
                xj.clone() + incr * (h / 6.0)
            })
            .collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::Integration { time: t + h });
        }
    }
    Ok(x)
}

/// Propagates the polynomial state `x0` (absolute image `center_out + map`)
/// and returns the flow expansion over `[t0, t1]` as a map from the same
/// deviations.
pub fn jet_integrate<F>(rhs: F, x0: &PolynomialMap, t0: f64, t1: f64, max_step: f64) -> Result<PolynomialMap, ScenarioError>
where
    F: Fn(f64, &[TruncatedPolynomial]) -> Result<Vec<TruncatedPolynomial>, PolyError>,
{
    let start: Vec<TruncatedPolynomial> = x0
        .components()
        .iter()
        .zip(x0.center_out())
        .map(|(p, c)| p.add_scalar(*c))
        .collect();
    let end = rk4(rhs, t0, t1, start, max_step)?;
    Ok(PolynomialMap::from_absolute(x0.center_in().to_vec(), end)?)
}

use nalgebra::DVector;

use crate::stochastic::{Density, LogWeights};

use super::spec::ScenarioSpec;
use super::ScenarioError;

/// Exact posterior mean of a static problem by quadrature on a regular grid
/// spanning ±8 prior standard deviations. Supports one or two states.
pub fn posterior_mean(spec: &ScenarioSpec, observation: &[f64]) -> Result<DVector<f64>, ScenarioError> {
    if !spec.dynamics.is_static() {
        return Err(ScenarioError::Invalid("reference posterior needs static dynamics".into()));
    }
    let n = spec.dim();
    let points: usize = match n {
        1 => 20_001,
        2 => 801,
        _ => return Err(ScenarioError::Invalid(format!("reference grid for {n} states"))),
    };
    let prior = spec.prior()?;
    let noise = spec.system()?.measurement_noise;
    let axes: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let s = prior.cov()[(i, i)].sqrt();
            let lo = prior.mean()[i] - 8.0 * s;
            let h = 16.0 * s / (points - 1) as f64;
            (0..points).map(|k| lo + h * k as f64).collect()
        })
        .collect();
    let total = points.pow(n as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut logw = Vec::with_capacity(total);
    for idx in 0..total {
        let x = DVector::from_fn(n, |i, _| axes[i][(idx / points.pow(i as u32)) % points]);
        let lw = match spec.measurement.measure(x.as_slice()) {
            Ok(y) => {
                let r = DVector::from_vec(spec.measurement.residual(&y, observation));
                prior.logpdf(&x)? + noise.logpdf(&r)?
            }
            Err(_) => f64::NEG_INFINITY,
        };
        nodes.push(x);
        logw.push(lw);
    }
    let w = LogWeights::new(logw).normalize()?;
    let (mean, _) = crate::stochastic::weighted_moments(&nodes, &w);
    Ok(mean)
}

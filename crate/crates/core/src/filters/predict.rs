use nalgebra::{DMatrix, DVector};

use crate::polyalg::{PolynomialMap, Space, TruncatedPolynomial};
use crate::scenarios::DynamicsModel;
use crate::stochastic::{Density, GaussianDensity, RngStream};

use super::config::{FilterSettings, PredictionMode};
use super::ensemble::{Belief, Ensemble};
use super::FilterError;

/// Interval covered by one prediction: leaving step `k` at `t0`, arriving at `t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub k: usize,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub ensemble: Ensemble,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Flow expansion in `(δx, δν)` about the previous mean; absent for
    /// static dynamics and direct propagation.
    pub pstm: Option<PolynomialMap>,
}

/// Polynomial state transition map about `center`.
///
/// Variables are the state deviations followed, when `with_noise` is set,
/// by additive process-noise deviations.
pub fn build_pstm(
    dynamics: &DynamicsModel,
    center: &DVector<f64>,
    with_noise: bool,
    ctx: &StepContext,
    order: u32,
) -> Result<PolynomialMap, FilterError> {
    let n = center.len();
    let nvars = if with_noise { 2 * n } else { n };
    let space = Space::new(nvars, order)?;
    let x: Vec<TruncatedPolynomial> = (0..n)
        .map(|i| TruncatedPolynomial::variable(&space, i).map(|v| v.add_scalar(center[i])))
        .collect::<Result<_, _>>()?;
    let mut out = dynamics.propagate(&x, ctx.k, ctx.t0, ctx.t1)?;
    if with_noise {
        for (i, o) in out.iter_mut().enumerate() {
            *o += &TruncatedPolynomial::variable(&space, n + i)?;
        }
    }
    let mut center_in = center.as_slice().to_vec();
    center_in.resize(nvars, 0.0);
    let map = PolynomialMap::from_absolute(center_in, out)?;
    if !map.is_finite() {
        return Err(FilterError::Divergence("flow expansion overflowed".into()));
    }
    Ok(map)
}

/// Propagates the belief to `ctx.t1`.
///
/// A Gaussian belief is sampled with `N_p` deviations; an ensemble keeps
/// its particles and weights. Static dynamics leave a Gaussian belief's
/// moments exact.
pub fn predict(
    belief: &Belief,
    dynamics: &DynamicsModel,
    process_noise: Option<&GaussianDensity>,
    ctx: &StepContext,
    settings: &FilterSettings,
    rng: &mut RngStream,
) -> Result<Prediction, FilterError> {
    let (center, prior_cov) = belief.moments()?;
    let n = center.len();

    let (deviations, logweights) = match belief {
        Belief::Gaussian(g) => {
            let draws = g.sample(settings.n_predict, rng)?;
            let devs: Vec<DVector<f64>> = draws.into_iter().map(|x| x - &center).collect();
            let len = devs.len();
            (devs, crate::stochastic::LogWeights::uniform(len))
        }
        Belief::Ensemble(e) => (
            e.particles.iter().map(|p| p - &center).collect(),
            e.logweights.clone(),
        ),
    };

    if dynamics.is_static() {
        let particles: Vec<DVector<f64>> = deviations.iter().map(|d| &center + d).collect();
        let ensemble = Ensemble::new(particles, logweights)?;
        let (mean, cov) = match belief {
            Belief::Gaussian(_) => (center, prior_cov),
            Belief::Ensemble(_) => ensemble.moments()?,
        };
        return Ok(Prediction {
            ensemble,
            mean,
            cov,
            pstm: None,
        });
    }

    let noise: Option<Vec<DVector<f64>>> = match process_noise {
        Some(q) => Some(q.sample(deviations.len(), rng)?),
        None => None,
    };

    let (particles, pstm) = match settings.prediction {
        PredictionMode::Pstm => {
            let map = build_pstm(dynamics, &center, noise.is_some(), ctx, settings.order)?;
            let mut point = vec![0.0; map.nvars()];
            let particles = deviations
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    point[..n].copy_from_slice(d.as_slice());
                    if let Some(nu) = &noise {
                        point[n..].copy_from_slice(nu[i].as_slice());
                    }
                    map.evaluate_absolute(&point).map(DVector::from_vec)
                })
                .collect::<Result<Vec<_>, _>>()?;
            (particles, Some(map))
        }
        PredictionMode::Direct => {
            let particles = deviations
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let x = &center + d;
                    let mut y = DVector::from_vec(dynamics.propagate(x.as_slice(), ctx.k, ctx.t0, ctx.t1)?);
                    if let Some(nu) = &noise {
                        y += &nu[i];
                    }
                    Ok(y)
                })
                .collect::<Result<Vec<_>, FilterError>>()?;
            (particles, None)
        }
    };
    if particles.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(FilterError::Divergence("non-finite predicted particle".into()));
    }
    let ensemble = Ensemble::new(particles, logweights)?;
    let (mean, cov) = ensemble.moments()?;
    Ok(Prediction {
        ensemble,
        mean,
        cov,
        pstm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::config::FilterSettings;

    fn projectile() -> DynamicsModel {
        let dt = 0.2;
        DynamicsModel::Linear {
            matrix: vec![
                vec![1.0, 0.0, dt, 0.0],
                vec![0.0, 1.0, 0.0, dt],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            forcing: vec![0.0, -0.5 * 9.81 * dt * dt, 0.0, -9.81 * dt],
        }
    }

    #[test]
    fn linear_pstm_is_the_transition_matrix() {
        let d = projectile();
        let c = DVector::from_vec(vec![0.0, 0.0, 1.0, 12.0]);
        let ctx = StepContext { k: 0, t0: 0.0, t1: 0.2 };
        let map = build_pstm(&d, &c, true, &ctx, 3).unwrap();
        let lin = map.linear_part();
        let DynamicsModel::Linear { matrix, .. } = &d else { unreachable!() };
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(lin[(i, j)], matrix[i][j]);
                assert_eq!(lin[(i, 4 + j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        for comp in map.components() {
            assert_eq!(comp.degree(), 1);
        }
        let dx = [0.1, -0.2, 0.3, 0.05, 0.0, 0.0, 0.0, 0.0];
        let y = map.evaluate_absolute(&dx).unwrap();
        let x: Vec<f64> = c.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let direct = d.propagate(&x, 0, 0.0, 0.2).unwrap();
        for (a, b) in y.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_prior_without_noise_stays_on_the_mean() {
        let d = projectile();
        let g = GaussianDensity::new(DVector::from_vec(vec![0.0, 0.0, 1.0, 12.0]), DMatrix::zeros(4, 4)).unwrap();
        let ctx = StepContext { k: 0, t0: 0.0, t1: 0.2 };
        let settings = FilterSettings::default().with_particles(20);
        let p = predict(&Belief::Gaussian(g.clone()), &d, None, &ctx, &settings, &mut RngStream::new(1, 0)).unwrap();
        let expect = d.propagate(g.mean().as_slice(), 0, 0.0, 0.2).unwrap();
        for x in &p.ensemble.particles {
            for (a, b) in x.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn static_gaussian_keeps_exact_moments() {
        let g = GaussianDensity::new(DVector::from_vec(vec![0.3, 0.4]), DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02]))).unwrap();
        let ctx = StepContext { k: 0, t0: 0.0, t1: 0.0 };
        let p = predict(&Belief::Gaussian(g.clone()), &DynamicsModel::Static, None, &ctx, &FilterSettings::default(), &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(&p.mean, g.mean());
        assert_eq!(&p.cov, g.cov());
        assert_eq!(p.ensemble.len(), 1000);
    }
}

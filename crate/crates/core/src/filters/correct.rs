use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::polyalg::PolynomialMap;
use crate::scenarios::{wrap_masked, MeasurementModel};
use crate::stochastic::{Density, Ess, GaussianDensity, LogWeights, RngStream};

use super::config::{LikelihoodEval, Resampling, UkfParams};
use super::ensemble::{repair_psd, Ensemble};
use super::FilterError;

/// Everything needed to score particles against one observation.
#[derive(Debug, Clone, Copy)]
pub struct Likelihood<'a> {
    pub model: &'a MeasurementModel,
    /// Measurement map about the predicted mean, used in polynomial mode.
    pub map: Option<&'a PolynomialMap>,
    pub observed: &'a [f64],
    /// Zero-mean measurement noise.
    pub noise: &'a GaussianDensity,
    pub mode: LikelihoodEval,
}

impl Likelihood<'_> {
    /// `log p(ỹ | x)`; `-∞` where the measurement function is undefined.
    pub fn log_likelihood(&self, x: &DVector<f64>) -> Result<f64, FilterError> {
        let y = match (self.mode, self.map) {
            (LikelihoodEval::Polynomial, Some(map)) => {
                let dx: Vec<f64> = x.iter().zip(map.center_in()).map(|(a, c)| a - c).collect();
                map.evaluate_absolute(&dx)?
            }
            _ => match self.model.measure(x.as_slice()) {
                Ok(y) => y,
                Err(_) => return Ok(f64::NEG_INFINITY),
            },
        };
        let r = self.model.residual(&y, self.observed);
        Ok(self.noise.logpdf(&DVector::from_vec(r))?)
    }
}

/// Weighted posterior summary.
#[derive(Debug, Clone)]
pub struct Correction {
    /// Particles with unnormalized log-weights.
    pub ensemble: Ensemble,
    pub weights: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub ess: Ess,
}

fn summarize(particles: Vec<DVector<f64>>, logw: Vec<f64>) -> Result<Correction, FilterError> {
    let ensemble = Ensemble::new(particles, LogWeights::new(logw))?;
    let weights = ensemble.weights()?;
    let (mean, cov) = crate::stochastic::weighted_moments(&ensemble.particles, &weights);
    let ess = crate::stochastic::effective_sample_size(&weights);
    Ok(Correction {
        ensemble,
        weights,
        mean,
        cov: (&cov + cov.transpose()) * 0.5,
        ess,
    })
}

/// Prior density of the update step.
#[derive(Debug, Clone)]
pub enum PriorDensity<'a> {
    Gaussian(GaussianDensity),
    /// `previous(f⁻¹(x))` for an invertible, volume-preserving flow `f`,
    /// with `f⁻¹` given as a polynomial map.
    Pullback {
        previous: &'a GaussianDensity,
        back: PolynomialMap,
    },
    /// Prior already folded into the importance log-weights.
    Flat,
}

impl PriorDensity<'_> {
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64, FilterError> {
        match self {
            PriorDensity::Gaussian(g) => Ok(g.logpdf(x)?),
            PriorDensity::Pullback { previous, back } => {
                let dx: Vec<f64> = x.iter().zip(back.center_in()).map(|(a, c)| a - c).collect();
                Ok(previous.logpdf(&DVector::from_vec(back.evaluate_absolute(&dx)?))?)
            }
            PriorDensity::Flat => Ok(0.0),
        }
    }
}

/// Importance-sampling update: `log w = log w_LIK + log w_PRE − log w_SIS`.
pub fn correct(
    particles: Vec<DVector<f64>>,
    log_sis: &[f64],
    likelihood: &Likelihood<'_>,
    prior: &PriorDensity<'_>,
) -> Result<Correction, FilterError> {
    let logw = particles
        .iter()
        .zip(log_sis)
        .map(|(x, q)| Ok(likelihood.log_likelihood(x)? + prior.logpdf(x)? - q))
        .collect::<Result<Vec<_>, FilterError>>()?;
    summarize(particles, logw)
}

/// Reweights samples of the prior itself by their likelihood.
pub fn correct_prior_samples(prior: &Ensemble, likelihood: &Likelihood<'_>) -> Result<Correction, FilterError> {
    let logw = prior
        .particles
        .iter()
        .zip(prior.logweights.values())
        .map(|(x, b)| Ok(b + likelihood.log_likelihood(x)?))
        .collect::<Result<Vec<_>, FilterError>>()?;
    summarize(prior.particles.clone(), logw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateKind {
    Scout,
    Gpf,
    Ekf,
    Ukf,
    Bootstrap,
    Auxiliary,
}

impl UpdateKind {
    pub fn name(self) -> &'static str {
        match self {
            UpdateKind::Scout => "scout",
            UpdateKind::Gpf => "gpf",
            UpdateKind::Ekf => "ekf",
            UpdateKind::Ukf => "ukf",
            UpdateKind::Bootstrap => "bootstrap",
            UpdateKind::Auxiliary => "auxiliary",
        }
    }
}

/// Scout update when the candidate covariance is smaller in Frobenius norm.
pub fn select_update(p_pred: &DMatrix<f64>, candidate: &DMatrix<f64>) -> UpdateKind {
    if candidate.norm() < p_pred.norm() {
        UpdateKind::Scout
    } else {
        UpdateKind::Gpf
    }
}

/// Indices drawn with probability proportional to `weights`.
pub fn multinomial_indices(weights: &[f64], n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cdf.partition_point(|c| *c <= u).min(weights.len() - 1)
        })
        .collect()
}

/// Resampled ensemble of `n` particles with uniform weights, or the input
/// unchanged when the ESS policy does not trigger.
pub fn resample(ensemble: &Ensemble, policy: Resampling, n: usize, rng: &mut RngStream) -> Result<Ensemble, FilterError> {
    let weights = ensemble.weights()?;
    match policy {
        Resampling::GpfGaussian => {
            let (mean, cov) = crate::stochastic::weighted_moments(&ensemble.particles, &weights);
            let g = GaussianDensity::new_symmetrized(mean, repair_psd(&cov))?;
            Ok(Ensemble::uniform(g.sample(n, rng)?))
        }
        Resampling::EssMultinomial { threshold } => {
            let ess = crate::stochastic::effective_sample_size(&weights);
            if ess.n_eff / ensemble.len() as f64 >= threshold {
                return Ok(ensemble.clone());
            }
            let idx = multinomial_indices(&weights, n, rng);
            Ok(Ensemble::uniform(idx.into_iter().map(|i| ensemble.particles[i].clone()).collect()))
        }
    }
}

fn gaussian_from(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<GaussianDensity, FilterError> {
    Ok(GaussianDensity::new_symmetrized(mean, repair_psd(&cov))?)
}

/// Extended Kalman posterior with `H` the linear part of `map`.
pub fn ekf_posterior(
    x_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    map: &PolynomialMap,
    observed: &[f64],
    meas_cov: &DMatrix<f64>,
    angle_mask: &[bool],
) -> Result<GaussianDensity, FilterError> {
    let h = map.linear_part();
    let innovation = DVector::from_vec(wrap_masked(angle_mask, observed, map.center_out()));
    let s = &h * p_pred * h.transpose() + meas_cov;
    let s_inv = s
        .clone()
        .cholesky()
        .ok_or_else(|| FilterError::Divergence("innovation covariance not positive definite".into()))?
        .inverse();
    let k = p_pred * h.transpose() * s_inv;
    let mean = x_pred + &k * innovation;
    let ikh = DMatrix::identity(x_pred.len(), x_pred.len()) - &k * &h;
    let cov = &ikh * p_pred * ikh.transpose() + &k * meas_cov * k.transpose();
    gaussian_from(mean, cov)
}

/// Unscented Kalman posterior with `2n + 1` sigma points.
pub fn ukf_posterior(
    x_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    model: &MeasurementModel,
    observed: &[f64],
    meas_cov: &DMatrix<f64>,
    params: UkfParams,
) -> Result<GaussianDensity, FilterError> {
    let n = x_pred.len();
    let nf = n as f64;
    let lambda = params.alpha * params.alpha * (nf + params.kappa) - nf;
    let spread = GaussianDensity::new_symmetrized(x_pred.clone(), repair_psd(&(p_pred * (nf + lambda))))?;
    let l = spread.factor();
    let mut sigma = vec![x_pred.clone()];
    for j in 0..n {
        sigma.push(x_pred + l.column(j));
    }
    for j in 0..n {
        sigma.push(x_pred - l.column(j));
    }
    let wm0 = lambda / (nf + lambda);
    let wc0 = wm0 + 1.0 - params.alpha * params.alpha + params.beta;
    let wi = 1.0 / (2.0 * (nf + lambda));
    let wm = |i: usize| if i == 0 { wm0 } else { wi };
    let wc = |i: usize| if i == 0 { wc0 } else { wi };

    let mask = model.angle_mask();
    let ys: Vec<Vec<f64>> = sigma
        .iter()
        .map(|s| model.measure(s.as_slice()))
        .collect::<Result<_, _>>()?;
    let m = ys[0].len();
    let mut y_mean = DVector::from_column_slice(&ys[0]);
    for (i, y) in ys.iter().enumerate().skip(1) {
        y_mean += DVector::from_vec(wrap_masked(&mask, y, &ys[0])) * wm(i);
    }
    let dys: Vec<DVector<f64>> = ys
        .iter()
        .map(|y| DVector::from_vec(wrap_masked(&mask, y, y_mean.as_slice())))
        .collect();
    let mut pyy = meas_cov.clone();
    let mut pxy = DMatrix::zeros(n, m);
    for (i, (s, dy)) in sigma.iter().zip(&dys).enumerate() {
        pyy.ger(wc(i), dy, dy, 1.0);
        pxy.ger(wc(i), &(s - x_pred), dy, 1.0);
    }
    let pyy_inv = pyy
        .clone()
        .cholesky()
        .ok_or_else(|| FilterError::Divergence("unscented innovation covariance not positive definite".into()))?
        .inverse();
    let k = &pxy * pyy_inv;
    let innovation = DVector::from_vec(wrap_masked(&mask, observed, y_mean.as_slice()));
    let mean = x_pred + &k * innovation;
    let cov = p_pred - &k * pyy * k.transpose();
    gaussian_from(mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::measure::expand;

    #[test]
    fn selector_examples() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(select_update(&i, &(&i * 0.1)), UpdateKind::Scout);
        assert_eq!(select_update(&(&i * 0.1), &i), UpdateKind::Gpf);
    }

    #[test]
    fn ess_policy_leaves_uniform_ensembles_alone() {
        let e = Ensemble::uniform((0..10).map(|i| DVector::from_vec(vec![i as f64])).collect());
        let r = resample(&e, Resampling::EssMultinomial { threshold: 0.5 }, 10, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(r, e);
    }

    #[test]
    fn gaussian_redraw_matches_fitted_moments() {
        let e = Ensemble::uniform(vec![DVector::from_vec(vec![-1.0]), DVector::from_vec(vec![1.0])]);
        let r = resample(&e, Resampling::GpfGaussian, 50_000, &mut RngStream::new(2, 0)).unwrap();
        let (m, c) = r.moments().unwrap();
        assert!(m[0].abs() < 4.0 * (1.0f64 / 50_000.0).sqrt());
        assert!((c[(0, 0)] - 1.0).abs() < 0.03);
    }

    #[test]
    fn multinomial_multiplicity_tracks_weights() {
        let w = [0.1, 0.6, 0.3];
        let n = 60_000;
        let idx = multinomial_indices(&w, n, &mut RngStream::new(4, 0));
        for (j, wj) in w.iter().enumerate() {
            let freq = idx.iter().filter(|&&i| i == j).count() as f64 / n as f64;
            let se = (wj * (1.0 - wj) / n as f64).sqrt();
            assert!((freq - wj).abs() < 4.0 * se);
        }
    }

    #[test]
    fn ekf_is_exact_for_linear_gaussian() {
        let model = MeasurementModel::Components { indices: vec![0] };
        let x = DVector::from_vec(vec![0.0]);
        let map = expand(&model, &x, 2).unwrap();
        let g = ekf_posterior(&x, &DMatrix::identity(1, 1), &map, &[1.0], &DMatrix::identity(1, 1), &[false]).unwrap();
        assert!((g.mean()[0] - 0.5).abs() < 1e-15);
        assert!((g.cov()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ukf_is_exact_for_linear_gaussian() {
        let model = MeasurementModel::Components { indices: vec![0] };
        let x = DVector::from_vec(vec![0.0]);
        for alpha in [1e-3, 1.0] {
            let p = UkfParams { alpha, beta: 2.0, kappa: 0.0 };
            let g = ukf_posterior(&x, &DMatrix::identity(1, 1), &model, &[1.0], &DMatrix::identity(1, 1), p).unwrap();
            assert!((g.mean()[0] - 0.5).abs() < 1e-9);
            assert!((g.cov()[(0, 0)] - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn weight_correction_is_constant_offset() {
        let model = MeasurementModel::RangeBearing;
        let noise = GaussianDensity::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.04]))).unwrap();
        let prior = GaussianDensity::new(DVector::from_vec(vec![0.3, 0.4]), DMatrix::identity(2, 2) * 0.01).unwrap();
        let lik = Likelihood {
            model: &model,
            map: None,
            observed: &[0.2, 0.0],
            noise: &noise,
            mode: LikelihoodEval::Direct,
        };
        let xs: Vec<DVector<f64>> = (0..20).map(|i| DVector::from_vec(vec![0.1 + 0.01 * i as f64, 0.05])).collect();
        let lq: Vec<f64> = (0..20).map(|i| -(i as f64) * 0.1).collect();
        let c = correct(xs.clone(), &lq, &lik, &PriorDensity::Gaussian(prior.clone())).unwrap();
        let offsets: Vec<f64> = xs
            .iter()
            .zip(&lq)
            .zip(&c.weights)
            .map(|((x, q), w)| w.ln() - (lik.log_likelihood(x).unwrap() + prior.logpdf(x).unwrap() - q))
            .collect();
        for o in &offsets {
            assert!((o - offsets[0]).abs() < 1e-10);
        }
    }
}

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::scenarios::{DynamicsModel, MeasurementModel};
use crate::stochastic::{Density, GaussianDensity, LogWeights, RngStream, StochasticError};

use super::config::{FilterConfig, FilterKind, LikelihoodEval, PriorWeight, Resampling, UpdateSelector};
use super::correct::{
    correct, correct_prior_samples, ekf_posterior, multinomial_indices, resample, select_update, ukf_posterior,
    Correction, Likelihood, PriorDensity, UpdateKind,
};
use super::ensemble::{repair_psd, Belief, Ensemble};
use super::measure::{build_measurement_map, pullback_map, Lift, MeasurementMap, PreviousState};
use super::predict::{predict, Prediction, StepContext};
use super::scout::{importance_density, importance_sample, scout, ScoutImportance};
use super::FilterError;

const SITE_PREDICT: u64 = 0;
const SITE_SCOUT: u64 = 1;
const SITE_IMPORTANCE: u64 = 2;
const SITE_RESAMPLE: u64 = 3;
const SITE_INIT: u64 = 4;

/// System seen by a filter: dynamics, sensor and their noises.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub dynamics: DynamicsModel,
    pub measurement: MeasurementModel,
    /// Additive process noise; `None` for noise-free dynamics.
    pub process_noise: Option<GaussianDensity>,
    /// Additive zero-mean measurement noise.
    pub measurement_noise: GaussianDensity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Condition number of the inverted map's linear part.
    pub condition: Option<f64>,
    /// Fictitious rows were appended to the measurement map.
    pub augmented: bool,
    /// The scout covariance needed the trace inflation.
    pub inflated: bool,
    /// Why a scout update fell back to the gpf update.
    pub fallback: Option<String>,
    /// `‖P⁻‖_F`.
    pub predicted_norm: f64,
    /// Frobenius norm of the covariance compared against `P⁻`.
    pub candidate_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub step: usize,
    pub time: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_eff: f64,
    pub psi: f64,
    pub update_kind: UpdateKind,
    pub diagnostics: Diagnostics,
    /// Posterior particles before resampling.
    pub ensemble: Ensemble,
    pub weights: Vec<f64>,
}

/// Recursive filter of any [`FilterKind`].
///
/// Every random draw comes from a stream keyed by `(seed, step, site)`, so
/// a run is reproducible from its seed alone.
#[derive(Debug, Clone)]
pub struct Filter {
    config: FilterConfig,
    belief: Belief,
    time: f64,
    step: usize,
    seed: u64,
}

impl Filter {
    pub fn new(config: FilterConfig, prior: GaussianDensity, t0: f64, seed: u64) -> Result<Self, FilterError> {
        config.settings.validate()?;
        Ok(Filter {
            config,
            belief: Belief::Gaussian(prior),
            time: t0,
            step: 0,
            seed,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn rng(&self, site: u64) -> RngStream {
        RngStream::new(self.seed, ((self.step as u64 + 1) << 3) | site)
    }

    /// Predicts to `time` and corrects with `observed`.
    pub fn step(&mut self, model: &SystemModel, time: f64, observed: &[f64]) -> Result<FilterOutput, FilterError> {
        let m = model.measurement.dim();
        if observed.len() != m {
            return Err(StochasticError::DimensionMismatch {
                expected: m,
                got: observed.len(),
            }
            .into());
        }
        let ctx = StepContext {
            k: self.step,
            t0: self.time,
            t1: time,
        };
        let (corr, kind, diag, belief) = match self.config.kind {
            FilterKind::Bpf => self.bootstrap(model, &ctx, observed)?,
            FilterKind::Apf => self.auxiliary(model, &ctx, observed)?,
            _ => self.gaussian_family(model, &ctx, observed)?,
        };
        self.step += 1;
        self.time = time;
        self.belief = belief;
        let n = corr.ensemble.len() as f64;
        Ok(FilterOutput {
            step: self.step,
            time,
            mean: corr.mean,
            cov: corr.cov,
            n_eff: corr.ess.n_eff,
            psi: 100.0 * corr.ess.n_eff / n,
            update_kind: kind,
            diagnostics: diag,
            ensemble: corr.ensemble,
            weights: corr.weights,
        })
    }

    fn predict(&self, model: &SystemModel, ctx: &StepContext) -> Result<Prediction, FilterError> {
        let mut rng = self.rng(SITE_PREDICT);
        predict(
            &self.belief,
            &model.dynamics,
            model.process_noise.as_ref(),
            ctx,
            &self.config.settings,
            &mut rng,
        )
    }

    fn bootstrap(
        &self,
        model: &SystemModel,
        ctx: &StepContext,
        observed: &[f64],
    ) -> Result<(Correction, UpdateKind, Diagnostics, Belief), FilterError> {
        if let Belief::Ensemble(e) = &self.belief {
            let needed = e.dim() + 1;
            if model.process_noise.is_none() && !model.dynamics.is_static() && e.distinct_count() < needed {
                return Err(FilterError::ParticleCollapse {
                    distinct: e.distinct_count(),
                    needed,
                });
            }
        }
        let pred = self.predict(model, ctx)?;
        let lik = Likelihood {
            model: &model.measurement,
            map: None,
            observed,
            noise: &model.measurement_noise,
            mode: LikelihoodEval::Direct,
        };
        let corr = correct_prior_samples(&pred.ensemble, &lik)?;
        let idx = multinomial_indices(&corr.weights, self.config.settings.n_predict, &mut self.rng(SITE_RESAMPLE));
        let belief = Belief::Ensemble(Ensemble::uniform(
            idx.into_iter().map(|i| corr.ensemble.particles[i].clone()).collect(),
        ));
        let diag = Diagnostics {
            predicted_norm: pred.cov.norm(),
            ..Diagnostics::default()
        };
        Ok((corr, UpdateKind::Bootstrap, diag, belief))
    }

    fn auxiliary(
        &self,
        model: &SystemModel,
        ctx: &StepContext,
        observed: &[f64],
    ) -> Result<(Correction, UpdateKind, Diagnostics, Belief), FilterError> {
        let Some(q) = &model.process_noise else {
            return Err(FilterError::NotApplicable(
                "the auxiliary particle filter needs process noise".into(),
            ));
        };
        let settings = &self.config.settings;
        let ensemble = match &self.belief {
            Belief::Gaussian(g) => Ensemble::uniform(g.sample(settings.n_predict, &mut self.rng(SITE_INIT))?),
            Belief::Ensemble(e) => e.clone(),
        };
        let lik = Likelihood {
            model: &model.measurement,
            map: None,
            observed,
            noise: &model.measurement_noise,
            mode: LikelihoodEval::Direct,
        };
        let means = ensemble
            .particles
            .iter()
            .map(|x| Ok(DVector::from_vec(model.dynamics.propagate(x.as_slice(), ctx.k, ctx.t0, ctx.t1)?)))
            .collect::<Result<Vec<_>, FilterError>>()?;
        let first_ll = means
            .iter()
            .map(|mu| lik.log_likelihood(mu))
            .collect::<Result<Vec<_>, _>>()?;
        let first: Vec<f64> = ensemble
            .logweights
            .values()
            .iter()
            .zip(&first_ll)
            .map(|(b, l)| b + l)
            .collect();
        let first_w = LogWeights::new(first).normalize()?;
        let n = settings.n_predict;
        let mut rng = self.rng(SITE_PREDICT);
        let idx = multinomial_indices(&first_w, n, &mut rng);
        let noise = q.sample(n, &mut rng)?;
        let particles: Vec<DVector<f64>> = idx.iter().zip(&noise).map(|(&i, nu)| &means[i] + nu).collect();
        let logw = particles
            .iter()
            .zip(&idx)
            .map(|(x, &i)| Ok(lik.log_likelihood(x)? - first_ll[i]))
            .collect::<Result<Vec<_>, FilterError>>()?;
        let ens = Ensemble::new(particles, LogWeights::new(logw))?;
        let weights = ens.weights()?;
        let (mean, cov) = crate::stochastic::weighted_moments(&ens.particles, &weights);
        let corr = Correction {
            ess: crate::stochastic::effective_sample_size(&weights),
            weights,
            mean,
            cov: (&cov + cov.transpose()) * 0.5,
            ensemble: ens.clone(),
        };
        Ok((corr, UpdateKind::Auxiliary, Diagnostics::default(), Belief::Ensemble(ens)))
    }

    fn gaussian_family(
        &self,
        model: &SystemModel,
        ctx: &StepContext,
        observed: &[f64],
    ) -> Result<(Correction, UpdateKind, Diagnostics, Belief), FilterError> {
        let settings = &self.config.settings;
        let pred = self.predict(model, ctx)?;
        let (prev_mean, prev_cov) = self.belief.moments()?;
        let previous = PreviousState {
            dynamics: &model.dynamics,
            ctx: *ctx,
            mean: &prev_mean,
            cov: &prev_cov,
            meas_cov: model.measurement_noise.cov(),
        };
        let mm = build_measurement_map(
            &pred.mean,
            &pred.cov,
            &model.measurement,
            &settings.augmentation,
            settings.order,
            Some(&previous),
        )?;
        let lik = Likelihood {
            model: &model.measurement,
            map: Some(&mm.full),
            observed,
            noise: &model.measurement_noise,
            mode: settings.likelihood,
        };
        let r = model.measurement_noise.cov();
        let mut diag = Diagnostics {
            predicted_norm: pred.cov.norm(),
            augmented: mm.square.fictitious.is_some(),
            ..Diagnostics::default()
        };
        // Exact prior through a deterministic, volume-preserving flow.
        let flow_prior = match &self.belief {
            Belief::Gaussian(previous) if model.process_noise.is_none() && model.dynamics.has_constant_jacobian() => {
                Some(previous)
            }
            _ => None,
        };
        let pullback = flow_prior.filter(|_| settings.prior_weight == PriorWeight::Pullback);
        // Pullback maps are expanded about the importance density's mean.
        let prior = |center: &DVector<f64>| -> Result<PriorDensity<'_>, FilterError> {
            Ok(match pullback {
                Some(previous) => PriorDensity::Pullback {
                    previous,
                    back: pullback_map(&model.dynamics, center, settings.order, *ctx)?,
                },
                None => PriorDensity::Gaussian(GaussianDensity::new_symmetrized(
                    pred.mean.clone(),
                    repair_psd(&pred.cov),
                )?),
            })
        };
        let mut rng_is = self.rng(SITE_IMPORTANCE);

        let (corr, kind) = match self.config.kind {
            FilterKind::Gpf => (correct_prior_samples(&pred.ensemble, &lik)?, UpdateKind::Gpf),
            FilterKind::SisEkf => {
                let q = ekf_posterior(&pred.mean, &pred.cov, &mm.full, observed, r, &model.measurement.angle_mask())?;
                let (xs, lq) = importance_sample(&q, settings.n_update, &mut rng_is)?;
                (correct(xs, &lq, &lik, &prior(q.mean())?)?, UpdateKind::Ekf)
            }
            FilterKind::SisUkf => {
                let q = ukf_posterior(&pred.mean, &pred.cov, &model.measurement, observed, r, settings.ukf)?;
                let (xs, lq) = importance_sample(&q, settings.n_update, &mut rng_is)?;
                (correct(xs, &lq, &lik, &prior(q.mean())?)?, UpdateKind::Ukf)
            }
            FilterKind::Spf1 | FilterKind::Spf2 => {
                let variant = self.config.kind.spf_variant().expect("scout kinds have a variant");
                let pre_decision = match (&settings.selector, &mm.square.fictitious) {
                    (UpdateSelector::FrobeniusFictitious, Some(f)) => {
                        diag.candidate_norm = Some(f.cov.norm());
                        Some(select_update(&pred.cov, &f.cov))
                    }
                    _ => None,
                };
                let density = if pre_decision == Some(UpdateKind::Gpf) {
                    None
                } else {
                    let lifted = flow_prior.is_some();
                    self.scout_density(&mm, &pred, observed, r, variant, lifted, &mut diag)?
                };
                match density {
                    Some(q) => {
                        let (zs, lq) = importance_sample(&q.density, settings.n_update, &mut rng_is)?;
                        let corr = match (&q.lift, flow_prior) {
                            (Some(lift), Some(previous)) => {
                                // Weighted over previous-state coordinates; the flow's
                                // constant Jacobian cancels on normalization.
                                let origin = DVector::from_column_slice(lift.center_in());
                                let mut xs = Vec::with_capacity(zs.len());
                                let mut log_sis = Vec::with_capacity(zs.len());
                                for (z, l) in zs.iter().zip(&lq) {
                                    xs.push(DVector::from_vec(lift.evaluate_absolute((z - &origin).as_slice())?));
                                    log_sis.push(l - previous.logpdf(z)?);
                                }
                                correct(xs, &log_sis, &lik, &PriorDensity::Flat)?
                            }
                            _ => correct(zs, &lq, &lik, &prior(q.density.center())?)?,
                        };
                        (corr, UpdateKind::Scout)
                    }
                    None => (correct_prior_samples(&pred.ensemble, &lik)?, UpdateKind::Gpf),
                }
            }
            FilterKind::Bpf | FilterKind::Apf => unreachable!("handled by dedicated paths"),
        };

        let belief = match settings.resampling {
            Resampling::GpfGaussian => Belief::Gaussian(GaussianDensity::new_symmetrized(
                corr.mean.clone(),
                repair_psd(&corr.cov),
            )?),
            policy @ Resampling::EssMultinomial { .. } => Belief::Ensemble(resample(
                &corr.ensemble,
                policy,
                settings.n_predict,
                &mut self.rng(SITE_RESAMPLE),
            )?),
        };
        Ok((corr, kind, diag, belief))
    }

    /// Scout importance density, or `None` when the gpf update is chosen.
    ///
    /// With `lifted`, a lifted square map yields a density over its domain,
    /// fused with the previous belief along the axes the scouts leave free.
    #[allow(clippy::too_many_arguments)]
    fn scout_density(
        &self,
        mm: &MeasurementMap,
        pred: &Prediction,
        observed: &[f64],
        r: &DMatrix<f64>,
        variant: super::config::SpfVariant,
        lifted: bool,
        diag: &mut Diagnostics,
    ) -> Result<Option<ScoutImportance>, FilterError> {
        let settings = &self.config.settings;
        let scouts = match scout(&mm.square, &pred.mean, observed, r, settings, &mut self.rng(SITE_SCOUT)) {
            Ok(s) => s,
            Err(e @ (FilterError::Poly(_) | FilterError::Divergence(_) | FilterError::Stochastic(_))) => {
                diag.fallback = Some(format!("scouting failed: {e}"));
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        diag.condition = Some(crate::polyalg::condition_number(&mm.square.map.linear_part()));

        let (center, p_s, lift) = match (&scouts.domain, &mm.square.lift) {
            (Some(domain), Some(lift)) if lifted => {
                let w = vec![1.0 / domain.len() as f64; domain.len()];
                let (m, c) = crate::stochastic::weighted_moments(domain, &w);
                let (m, c) = fuse_residual_prior(&m, &c, lift).unwrap_or((m, c));
                (m, c, Some(lift.flow.clone()))
            }
            _ => (scouts.mean.clone(), scouts.cov.clone(), None),
        };
        let mut p_q = p_s.clone();
        let mut density = importance_density(&center, &p_q, variant, settings.box_rule);
        if density.is_err() {
            let bump = 1e-10 * if lift.is_some() { p_s.trace() } else { pred.cov.trace() };
            p_q += DMatrix::identity(p_q.nrows(), p_q.ncols()) * bump;
            diag.inflated = true;
            density = importance_density(&center, &p_q, variant, settings.box_rule);
        }
        let density = match density {
            Ok(d) => d,
            Err(e) => {
                diag.fallback = Some(format!("degenerate scout covariance: {e}"));
                return Ok(None);
            }
        };
        let p_s = scouts.cov;
        let decision = match settings.selector {
            UpdateSelector::AlwaysScout => UpdateKind::Scout,
            UpdateSelector::FrobeniusScout => {
                diag.candidate_norm = Some(p_s.norm());
                select_update(&pred.cov, &p_s)
            }
            UpdateSelector::FrobeniusFictitious => {
                if mm.square.fictitious.is_some() {
                    UpdateKind::Scout
                } else {
                    diag.candidate_norm = Some(p_s.norm());
                    select_update(&pred.cov, &p_s)
                }
            }
        };
        Ok((decision == UpdateKind::Scout).then_some(ScoutImportance { density, lift }))
    }
}

/// Scout moments fused with the previous belief along the axes that the
/// fictitious rows leave out; exact for linear maps. `None` when the scout
/// covariance is not invertible.
fn fuse_residual_prior(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    lift: &Lift,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let scout_info = cov.clone().cholesky()?.inverse();
    let info = &scout_info + &lift.residual_info;
    let chol = ((&info + info.transpose()) * 0.5).cholesky()?;
    let fused_mean = chol.solve(&(&scout_info * mean + &lift.residual_info * &lift.prior_mean));
    Some((fused_mean, chol.inverse()))
}

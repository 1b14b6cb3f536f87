use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::filters::{Filter, FilterConfig, FilterKind};
use crate::scenarios::{simulate_truth, ScenarioSpec};
use crate::stochastic::{derive_seed, mix64, RngStream};

use super::metrics::{aggregate, FilterResult};
use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;
const TRUTH_TAG: u64 = 0x7472_7574_68;
/// A run has diverged once some error component exceeds `DIVERGENCE_SIGMAS`
/// estimated standard deviations on `DIVERGENCE_STEPS` consecutive steps.
pub const DIVERGENCE_SIGMAS: f64 = 5.0;
pub const DIVERGENCE_STEPS: usize = 5;

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub scenario: ScenarioSpec,
    pub filters: Vec<FilterConfig>,
    pub n_mc: usize,
    pub base_seed: u64,
    /// Keep every run's per-step record in the result.
    pub keep_runs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub estimate: Vec<f64>,
    /// Diagonal of the posterior covariance.
    pub variance: Vec<f64>,
    /// Estimate minus truth.
    pub error: Vec<f64>,
    pub n_eff: f64,
    pub psi: f64,
    pub update_kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { step: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub filter: String,
    pub run_id: usize,
    /// Seed that reproduces this run alone.
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub status: RunStatus,
    /// Step at which the error first stayed beyond the divergence bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged: Option<usize>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub schema_version: u32,
    pub scenario: String,
    pub n_mc: usize,
    pub base_seed: u64,
    pub filters: Vec<FilterResult>,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_mc == 0 {
            return Err(HarnessError::Invalid("n_mc must be at least 1".into()));
        }
        if self.filters.is_empty() {
            return Err(HarnessError::Invalid("no filters selected".into()));
        }
        self.scenario.validate()?;
        for f in &self.filters {
            f.settings.validate()?;
        }
        Ok(())
    }
}

fn filter_seed(run_seed: u64, kind: FilterKind) -> u64 {
    let tag = FilterKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64 + 1;
    mix64(run_seed ^ mix64(tag))
}

/// One run of one filter against the truth drawn for `run_id`.
pub fn run_single(spec: &ScenarioSpec, config: &FilterConfig, run_id: usize, base_seed: u64) -> Result<RunRecord, HarnessError> {
    let seed = derive_seed(base_seed, run_id as u64);
    let truth = simulate_truth(spec, &mut RngStream::new(mix64(seed ^ TRUTH_TAG), 0))?;
    let system = spec.system()?;
    let mut filter = Filter::new(config.clone(), spec.prior()?, spec.t0, filter_seed(seed, config.kind))?;
    let mut steps = Vec::with_capacity(truth.records.len());
    let mut status = RunStatus::Completed;
    let mut outside = 0;
    let mut diverged = None;
    for (rec, x_true) in truth.records.iter().zip(&truth.states) {
        if !rec.visible {
            continue;
        }
        match filter.step(&system, rec.time, &rec.observation) {
            Ok(out) => {
                let error: Vec<f64> = out.mean.iter().zip(x_true).map(|(a, b)| a - b).collect();
                let finite = error.iter().all(|e| e.is_finite());
                let beyond = error
                    .iter()
                    .zip(out.cov.diagonal().iter())
                    .any(|(e, v)| e.abs() > DIVERGENCE_SIGMAS * v.max(0.0).sqrt());
                outside = if beyond { outside + 1 } else { 0 };
                steps.push(StepRecord {
                    step: rec.step + 1,
                    time: rec.time,
                    estimate: out.mean.as_slice().to_vec(),
                    variance: out.cov.diagonal().as_slice().to_vec(),
                    error,
                    n_eff: out.n_eff,
                    psi: out.psi,
                    update_kind: out.update_kind.name().to_string(),
                    fallback: out.diagnostics.fallback,
                });
                if !finite {
                    status = RunStatus::Failed {
                        step: rec.step + 1,
                        message: "non-finite estimate".into(),
                    };
                    break;
                }
                if outside >= DIVERGENCE_STEPS && diverged.is_none() {
                    diverged = Some(rec.step + 1);
                }
            }
            Err(e) => {
                status = RunStatus::Failed {
                    step: rec.step + 1,
                    message: e.to_string(),
                };
                break;
            }
        }
    }
    Ok(RunRecord {
        filter: config.kind.name().to_string(),
        run_id,
        seed,
        steps,
        status,
        diverged,
    })
}

/// Runs every filter `n_mc` times. Runs are distributed over the current
/// rayon pool and gathered in run order, so the result does not depend on
/// the number of workers.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignResult, HarnessError> {
    spec.validate()?;
    let scenario = spec.scenario.resolved()?;
    let mut filters = Vec::with_capacity(spec.filters.len());
    for config in &spec.filters {
        let runs = (0..spec.n_mc)
            .into_par_iter()
            .map(|run| run_single(&scenario, config, run, spec.base_seed))
            .collect::<Result<Vec<_>, _>>()?;
        filters.push(aggregate(config, &runs, spec.keep_runs));
    }
    Ok(CampaignResult {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        n_mc: spec.n_mc,
        base_seed: spec.base_seed,
        filters,
    })
}

/// Runs `f` on a pool of `threads` workers (`None`: `SPF_WORKERS` or the
/// rayon default).
pub fn with_workers<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let threads = threads
        .or_else(|| std::env::var("SPF_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    Ok(pool.install(f))
}

//! Scout particle filter and the baseline filters it is compared with.
//!
//! The scout update expands the measurement function about the predicted
//! mean, inverts the (possibly augmented) map, pushes samples of the
//! measurement noise through the inverse and fits the importance density
//! to the resulting cloud. Weights are `likelihood · prior / importance`.

mod config;
mod correct;
mod ensemble;
mod filter;
mod measure;
mod predict;
mod scout;

pub use config::{
    Augmentation, BoxRule, FictitiousSpread, FilterConfig, FilterKind, FilterSettings, LikelihoodEval, PredictionMode, PriorWeight, Resampling,
    SpfVariant, UkfParams, UpdateSelector,
};
pub use correct::{
    correct, correct_prior_samples, ekf_posterior, multinomial_indices, resample, select_update, ukf_posterior,
    Correction, Likelihood, PriorDensity, UpdateKind,
};
pub use ensemble::{repair_psd, Belief, Ensemble};
pub use filter::{Diagnostics, Filter, FilterOutput, SystemModel};
pub use measure::{
    build_measurement_map, expand, pullback_map, most_informative_rows, select_augmenting_rows, select_identity_components, select_rows, Fictitious,
    FictitiousRows, MeasurementMap, PreviousState, SquareMap,
};
pub use predict::{build_pstm, predict, Prediction, StepContext};
pub use scout::{importance_density, importance_sample, scout, Importance, ScoutImportance, ScoutSet};

use thiserror::Error;

use crate::polyalg::PolyError;
use crate::scenarios::ScenarioError;
use crate::stochastic::StochasticError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error(transparent)]
    Model(#[from] ScenarioError),
    #[error("particle collapse: {distinct} distinct particles, {needed} needed and no process noise to respread")]
    ParticleCollapse { distinct: usize, needed: usize },
    #[error("{0}")]
    NotApplicable(String),
    #[error("{got} scout particles, at least {needed} needed")]
    TooFewScouts { got: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("divergence: {0}")]
    Divergence(String),
}

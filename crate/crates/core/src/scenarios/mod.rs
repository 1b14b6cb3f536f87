//! Benchmark problems: dynamics and sensor models, scenario files, truth
//! simulation and jet transport.

mod integrate;
mod models;
mod orbit;
mod reference;
mod spec;
mod truth;

pub use integrate::{jet_integrate, rk4};
pub use models::{wrap_angle, wrap_masked, DynamicsModel, MeasurementModel};
pub use orbit::{OrbitModel, J2, J3, MU_EARTH, R_EARTH};
pub use reference::posterior_mean;
pub use spec::{by_name, matrix, Schedule, ScenarioSpec, Station, TruthRule, NAMES};
pub use truth::{noiseless, observation_times, simulate_truth, station_elevation, ObservationRecord, Truth, EARTH_ROTATION};

use thiserror::Error;

use crate::polyalg::PolyError;
use crate::stochastic::StochasticError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("integration failed near t = {time}")]
    Integration { time: f64 },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown scenario `{name}`; valid scenarios: {valid}")]
    UnknownScenario { name: String, valid: String },
}

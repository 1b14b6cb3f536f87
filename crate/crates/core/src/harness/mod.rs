//! Monte Carlo campaigns, metrics, result files and the command line.

mod campaign;
pub mod cli;
mod metrics;
mod output;

pub use campaign::{
    run_campaign, run_single, with_workers, CampaignResult, CampaignSpec, RunRecord, RunStatus, StepRecord,
    DIVERGENCE_SIGMAS, DIVERGENCE_STEPS, SCHEMA_VERSION,
};
pub use metrics::{aggregate, FilterResult, FilterSummary, StepAggregate};
pub use output::{
    emit_results, read_json, runs_header, steps_header, Format, FAILURES_HEADER, SELECTION_HEADER, SUMMARY_HEADER,
};

use thiserror::Error;

use crate::filters::{FilterError, FilterKind};
use crate::scenarios::ScenarioError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown filter `{name}`; valid filters: {valid}")]
    UnknownFilter { name: String, valid: String },
    #[error("{0}")]
    Invalid(String),
}

/// Parses `all` or a comma-separated list of filter names.
pub fn parse_filters(list: &str) -> Result<Vec<FilterKind>, HarnessError> {
    if list.trim() == "all" {
        return Ok(FilterKind::ALL.to_vec());
    }
    list.split(',')
        .map(|s| {
            s.trim().parse::<FilterKind>().map_err(|_| HarnessError::UnknownFilter {
                name: s.trim().to_string(),
                valid: FilterKind::ALL.map(|k| k.name()).join(", "),
            })
        })
        .collect()
}

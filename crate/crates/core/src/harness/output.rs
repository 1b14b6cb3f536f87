use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::campaign::{CampaignResult, RunStatus};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(HarnessError::Invalid(format!("unknown format `{s}` (csv, json)"))),
        }
    }
}

pub const SUMMARY_HEADER: &[&str] = &[
    "schema_version",
    "scenario",
    "filter",
    "n_mc",
    "base_seed",
    "runs",
    "failures",
    "diverged",
    "rmse",
    "mean_psi",
];

pub const SELECTION_HEADER: &[&str] = &["filter", "step", "time", "scout", "gpf", "other"];

pub const FAILURES_HEADER: &[&str] = &["filter", "run_id", "seed", "step", "message"];

/// Per-step aggregate columns for an `n`-dimensional state.
pub fn steps_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["filter", "step", "time", "count", "rmse", "mean_psi", "mean_n_eff"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["mean_error", "sigma_eff", "sigma_est"] {
        h.extend((1..=n).map(|j| format!("{prefix}_{j}")));
    }
    h
}

/// Per-run, per-step columns for an `n`-dimensional state.
pub fn runs_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["filter", "run_id", "seed", "step", "time", "update_kind", "n_eff", "psi"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["estimate", "error", "variance"] {
        h.extend((1..=n).map(|j| format!("{prefix}_{j}")));
    }
    h
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn state_dim(result: &CampaignResult) -> usize {
    result
        .filters
        .iter()
        .flat_map(|f| f.steps.first().map(|s| s.mean_error.len()))
        .next()
        .unwrap_or(0)
}

fn write_csv(path: &Path, header: &[String], rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

/// Writes the result into `dir` and returns the files written.
///
/// JSON: `campaign.json`. CSV: `summary.csv`, `steps.csv`, `selection.csv`,
/// `runs.csv` and `failures.csv`.
pub fn emit_results(result: &CampaignResult, format: Format, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    match format {
        Format::Json => {
            let path = dir.join("campaign.json");
            let text = serde_json::to_string_pretty(result).map_err(|e| io_err(&path, e))?;
            std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
            Ok(vec![path])
        }
        Format::Csv => {
            let n = state_dim(result);
            let mut summary = Vec::new();
            let mut steps = Vec::new();
            let mut selection = Vec::new();
            let mut runs = Vec::new();
            let mut failures = Vec::new();
            for f in &result.filters {
                let s = &f.summary;
                summary.push(vec![
                    result.schema_version.to_string(),
                    result.scenario.clone(),
                    s.filter.clone(),
                    result.n_mc.to_string(),
                    result.base_seed.to_string(),
                    s.runs.to_string(),
                    s.failures.to_string(),
                    s.diverged.to_string(),
                    opt(s.rmse),
                    opt(s.mean_psi),
                ]);
                for a in &f.steps {
                    let mut row = vec![
                        s.filter.clone(),
                        a.step.to_string(),
                        num(a.time),
                        a.count.to_string(),
                        num(a.rmse),
                        num(a.mean_psi),
                        num(a.mean_n_eff),
                    ];
                    row.extend(a.mean_error.iter().chain(&a.sigma_eff).chain(&a.sigma_est).map(|v| num(*v)));
                    steps.push(row);
                    selection.push(vec![
                        s.filter.clone(),
                        a.step.to_string(),
                        num(a.time),
                        a.scout.to_string(),
                        a.gpf.to_string(),
                        a.other.to_string(),
                    ]);
                }
                for r in &f.runs {
                    for st in &r.steps {
                        let mut row = vec![
                            r.filter.clone(),
                            r.run_id.to_string(),
                            r.seed.to_string(),
                            st.step.to_string(),
                            num(st.time),
                            st.update_kind.clone(),
                            num(st.n_eff),
                            num(st.psi),
                        ];
                        row.extend(st.estimate.iter().chain(&st.error).chain(&st.variance).map(|v| num(*v)));
                        runs.push(row);
                    }
                    if let RunStatus::Failed { step, message } = &r.status {
                        failures.push(vec![
                            r.filter.clone(),
                            r.run_id.to_string(),
                            r.seed.to_string(),
                            step.to_string(),
                            message.clone(),
                        ]);
                    }
                }
            }
            let files = [
                ("summary.csv", owned(SUMMARY_HEADER), summary),
                ("steps.csv", steps_header(n), steps),
                ("selection.csv", owned(SELECTION_HEADER), selection),
                ("runs.csv", runs_header(n), runs),
                ("failures.csv", owned(FAILURES_HEADER), failures),
            ];
            let mut written = Vec::new();
            for (name, header, rows) in files {
                let path = dir.join(name);
                write_csv(&path, &header, rows)?;
                written.push(path);
            }
            Ok(written)
        }
    }
}

pub fn read_json(path: &Path) -> Result<CampaignResult, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

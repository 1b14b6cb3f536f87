use serde::{Deserialize, Serialize};

use crate::filters::FilterConfig;

use super::campaign::RunRecord;

/// Monte Carlo statistics of one step across the completed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAggregate {
    pub step: usize,
    pub time: f64,
    /// Runs contributing to this step.
    pub count: usize,
    /// `√(1/N Σ εᵀε)`.
    pub rmse: f64,
    pub mean_psi: f64,
    pub mean_n_eff: f64,
    /// Per-axis mean error.
    pub mean_error: Vec<f64>,
    /// Per-axis error spread about its mean, normalized by `1/N`.
    pub sigma_eff: Vec<f64>,
    /// Per-axis mean of `√P⁺_jj`.
    pub sigma_est: Vec<f64>,
    /// Update selection histogram: runs per update kind.
    pub scout: usize,
    pub gpf: usize,
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub filter: String,
    pub runs: usize,
    pub failures: usize,
    /// Runs whose error stayed beyond the divergence bound.
    #[serde(default)]
    pub diverged: usize,
    /// RMSE at the last step over completed runs.
    pub rmse: Option<f64>,
    /// Mean Ψ over completed runs and steps.
    pub mean_psi: Option<f64>,
    /// First failure message, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub config: FilterConfig,
    pub summary: FilterSummary,
    pub steps: Vec<StepAggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunRecord>,
}

/// Aggregates runs given in run-id order. Sums run sequentially so the
/// result is independent of how the runs were scheduled.
pub fn aggregate(config: &FilterConfig, runs: &[RunRecord], keep_runs: bool) -> FilterResult {
    let completed: Vec<&RunRecord> = runs.iter().filter(|r| r.completed()).collect();
    let n_steps = completed.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    let mut steps = Vec::with_capacity(n_steps);
    for s in 0..n_steps {
        let recs: Vec<_> = completed.iter().filter_map(|r| r.steps.get(s)).collect();
        let n = recs.len() as f64;
        let dim = recs[0].error.len();
        let mut mean_error = vec![0.0; dim];
        let mut sigma_est = vec![0.0; dim];
        let (mut sq, mut psi, mut n_eff) = (0.0, 0.0, 0.0);
        let (mut scout, mut gpf, mut other) = (0, 0, 0);
        for r in &recs {
            for j in 0..dim {
                mean_error[j] += r.error[j] / n;
                sigma_est[j] += r.variance[j].max(0.0).sqrt() / n;
            }
            sq += r.error.iter().map(|e| e * e).sum::<f64>();
            psi += r.psi;
            n_eff += r.n_eff;
            match r.update_kind.as_str() {
                "scout" => scout += 1,
                "gpf" => gpf += 1,
                _ => other += 1,
            }
        }
        let mut sigma_eff = vec![0.0; dim];
        for r in &recs {
            for j in 0..dim {
                let d = r.error[j] - mean_error[j];
                sigma_eff[j] += d * d / n;
            }
        }
        sigma_eff.iter_mut().for_each(|v| *v = v.sqrt());
        steps.push(StepAggregate {
            step: recs[0].step,
            time: recs[0].time,
            count: recs.len(),
            rmse: (sq / n).sqrt(),
            mean_psi: psi / n,
            mean_n_eff: n_eff / n,
            mean_error,
            sigma_eff,
            sigma_est,
            scout,
            gpf,
            other,
        });
    }
    let all_psi: Vec<f64> = completed.iter().flat_map(|r| r.steps.iter().map(|s| s.psi)).collect();
    let summary = FilterSummary {
        filter: config.kind.name().to_string(),
        runs: runs.len(),
        failures: runs.len() - completed.len(),
        diverged: runs.iter().filter(|r| r.diverged.is_some()).count(),
        rmse: steps.last().map(|s| s.rmse),
        mean_psi: (!all_psi.is_empty()).then(|| all_psi.iter().sum::<f64>() / all_psi.len() as f64),
        first_failure: runs.iter().find_map(|r| match &r.status {
            super::campaign::RunStatus::Failed { step, message } => {
                Some(format!("run {} step {step}: {message}", r.run_id))
            }
            _ => None,
        }),
    };
    FilterResult {
        config: config.clone(),
        summary,
        steps,
        runs: if keep_runs { runs.to_vec() } else { Vec::new() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{FilterKind, FilterSettings};
    use crate::harness::campaign::{RunStatus, StepRecord};

    fn run(id: usize, error: Vec<f64>, variance: Vec<f64>, kind: &str) -> RunRecord {
        RunRecord {
            filter: "spf2".into(),
            run_id: id,
            seed: id as u64,
            steps: vec![StepRecord {
                step: 1,
                time: 0.0,
                estimate: error.clone(),
                variance,
                error,
                n_eff: 10.0,
                psi: 1.0,
                update_kind: kind.into(),
                fallback: None,
            }],
            status: RunStatus::Completed,
            diverged: None,
        }
    }

    fn cfg() -> FilterConfig {
        FilterConfig::new(FilterKind::Spf2, FilterSettings::default())
    }

    #[test]
    fn single_run_rmse_is_error_norm() {
        let r = aggregate(&cfg(), &[run(0, vec![3.0, 4.0], vec![1.0, 1.0], "scout")], false);
        assert_eq!(r.summary.rmse, Some(5.0));
        assert_eq!(r.steps[0].sigma_eff, vec![0.0, 0.0]);
        assert_eq!(r.steps[0].sigma_est, vec![1.0, 1.0]);
    }

    #[test]
    fn moments_and_histogram() {
        let runs = [
            run(0, vec![1.0], vec![4.0], "scout"),
            run(1, vec![-1.0], vec![4.0], "gpf"),
            run(2, vec![3.0], vec![4.0], "scout"),
        ];
        let r = aggregate(&cfg(), &runs, true);
        let s = &r.steps[0];
        assert_eq!(s.mean_error, vec![1.0]);
        assert!((s.sigma_eff[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.sigma_est, vec![2.0]);
        assert_eq!((s.scout, s.gpf, s.other), (2, 1, 0));
        assert!((s.rmse - (11.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(r.runs.len(), 3);
    }

    #[test]
    fn failures_are_counted_not_aggregated() {
        let mut bad = run(1, vec![100.0], vec![1.0], "scout");
        bad.status = RunStatus::Failed {
            step: 1,
            message: "x".into(),
        };
        let r = aggregate(&cfg(), &[run(0, vec![1.0], vec![1.0], "gpf"), bad], false);
        assert_eq!(r.summary.failures, 1);
        assert_eq!(r.summary.rmse, Some(1.0));
        assert!(r.summary.first_failure.unwrap().contains("run 1"));
    }

    #[test]
    fn all_failed_has_no_rmse() {
        let mut bad = run(0, vec![1.0], vec![1.0], "gpf");
        bad.status = RunStatus::Failed {
            step: 1,
            message: "x".into(),
        };
        let r = aggregate(&cfg(), &[bad], false);
        assert_eq!(r.summary.rmse, None);
        assert!(r.steps.is_empty());
    }

    #[test]
    fn diverged_runs_are_counted_and_kept() {
        let mut bad = run(1, vec![3.0], vec![0.01], "gpf");
        bad.diverged = Some(1);
        let r = aggregate(&cfg(), &[run(0, vec![1.0], vec![1.0], "gpf"), bad], false);
        assert_eq!(r.summary.diverged, 1);
        assert_eq!(r.summary.failures, 0);
        assert_eq!(r.steps[0].count, 2);
    }
}

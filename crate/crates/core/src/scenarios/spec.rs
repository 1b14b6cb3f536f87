use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::filters::{Augmentation, FilterSettings, PredictionMode, SystemModel};
use crate::stochastic::GaussianDensity;

use super::models::{DynamicsModel, MeasurementModel};
use super::orbit::OrbitModel;
use super::ScenarioError;

pub const NAMES: [&str; 6] = ["range_angle", "range_only", "projectile", "orbit", "bimodal", "linear_gaussian"];

/// When observations arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// One observation at `time`.
    Single { time: f64 },
    /// `steps` observations `dt` apart, the first at `t0 + dt`.
    Uniform { dt: f64, steps: usize },
    /// `windows` bursts of `count` observations `spacing` apart, burst
    /// starts `period` apart.
    Bursts {
        count: usize,
        spacing: f64,
        period: f64,
        windows: usize,
        start: f64,
    },
    /// Candidate times every `spacing` over `horizon`; visible when the
    /// elevation seen from the station exceeds its mask.
    Station {
        station: Station,
        spacing: f64,
        horizon: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    /// Geocentric latitude, degrees.
    pub latitude: f64,
    /// Longitude at `t = 0`, degrees.
    pub longitude: f64,
    /// Elevation mask, degrees.
    pub mask: f64,
}

impl Default for Station {
    fn default() -> Self {
        Station {
            latitude: 40.0,
            longitude: 0.0,
            mask: 10.0,
        }
    }
}

/// How the true state is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthRule {
    /// Initial state drawn from the prior.
    SamplePrior,
    /// Initial state fixed.
    Fixed { state: Vec<f64> },
    /// Static problem with a fixed received measurement. Errors are taken
    /// against `state`, the exact posterior mean; when absent it is
    /// computed by quadrature.
    FixedObservation {
        observation: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub t0: f64,
    pub dynamics: DynamicsModel,
    pub measurement: MeasurementModel,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process_noise: Option<Vec<Vec<f64>>>,
    pub measurement_noise: Vec<Vec<f64>>,
    pub schedule: Schedule,
    pub truth: TruthRule,
    #[serde(default)]
    pub filter: FilterSettings,
}

pub fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i].get(j).copied().unwrap_or(f64::NAN))
}

fn diag(values: &[f64]) -> Vec<Vec<f64>> {
    (0..values.len())
        .map(|i| (0..values.len()).map(|j| if i == j { values[i] } else { 0.0 }).collect())
        .collect()
}

fn check_square(name: &str, rows: &[Vec<f64>], n: usize) -> Result<(), ScenarioError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ScenarioError::Invalid(format!("{name} must be {n}×{n}")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement.dim()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.dim();
        if n == 0 {
            return Err(ScenarioError::Invalid("empty state".into()));
        }
        if let Some(d) = self.dynamics.dim() {
            if d != n {
                return Err(ScenarioError::Dimension { expected: d, got: n });
            }
        }
        if let DynamicsModel::Linear { matrix, forcing } = &self.dynamics {
            check_square("dynamics matrix", matrix, n)?;
            if forcing.len() != n {
                return Err(ScenarioError::Dimension {
                    expected: n,
                    got: forcing.len(),
                });
            }
        }
        if self.measurement.min_state_dim() > n {
            return Err(ScenarioError::Dimension {
                expected: self.measurement.min_state_dim(),
                got: n,
            });
        }
        check_square("prior_cov", &self.prior_cov, n)?;
        check_square("measurement_noise", &self.measurement_noise, self.measurement_dim())?;
        if let Some(q) = &self.process_noise {
            check_square("process_noise", q, n)?;
        }
        self.prior()?;
        self.system()?;
        self.filter
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        match &self.truth {
            TruthRule::Fixed { state } if state.len() != n => {
                return Err(ScenarioError::Dimension {
                    expected: n,
                    got: state.len(),
                })
            }
            TruthRule::FixedObservation { observation, state } => {
                if observation.len() != self.measurement_dim() {
                    return Err(ScenarioError::Dimension {
                        expected: self.measurement_dim(),
                        got: observation.len(),
                    });
                }
                if state.as_ref().is_some_and(|s| s.len() != n) {
                    return Err(ScenarioError::Invalid("truth state has the wrong length".into()));
                }
                if !self.dynamics.is_static() {
                    return Err(ScenarioError::Invalid(
                        "a fixed observation needs static dynamics".into(),
                    ));
                }
            }
            _ => {}
        }
        if let Schedule::Station { .. } = &self.schedule {
            if !matches!(self.dynamics, DynamicsModel::Orbit(_)) {
                return Err(ScenarioError::Invalid("station schedules need orbit dynamics".into()));
            }
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<GaussianDensity, ScenarioError> {
        Ok(GaussianDensity::new(
            DVector::from_column_slice(&self.prior_mean),
            matrix(&self.prior_cov),
        )?)
    }

    pub fn system(&self) -> Result<SystemModel, ScenarioError> {
        let m = self.measurement_dim();
        let process_noise = match &self.process_noise {
            Some(q) => Some(GaussianDensity::new(DVector::zeros(self.dim()), matrix(q))?),
            None => None,
        };
        Ok(SystemModel {
            dynamics: self.dynamics.clone(),
            measurement: self.measurement.clone(),
            process_noise,
            measurement_noise: GaussianDensity::new(DVector::zeros(m), matrix(&self.measurement_noise))?,
        })
    }

    /// Same spec with the reference posterior mean filled in for fixed
    /// observation problems.
    pub fn resolved(&self) -> Result<ScenarioSpec, ScenarioError> {
        let mut out = self.clone();
        if let TruthRule::FixedObservation { observation, state: None } = &self.truth {
            let mean = super::reference::posterior_mean(self, observation)?;
            out.truth = TruthRule::FixedObservation {
                observation: observation.clone(),
                state: Some(mean.as_slice().to_vec()),
            };
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string_pretty(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Parses a scenario file. A top-level `base = "<name>"` starts from
    /// that builtin and overrides only the given keys.
    pub fn from_toml(text: &str) -> Result<ScenarioSpec, ScenarioError> {
        let mut value: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        if let Some(base) = value.remove("base") {
            let name = base
                .as_str()
                .ok_or_else(|| ScenarioError::Parse("`base` must be a scenario name".into()))?;
            let builtin = by_name(name)?;
            let mut merged = toml::Table::try_from(&builtin).map_err(|e| ScenarioError::Parse(e.to_string()))?;
            merge(&mut merged, value);
            value = merged;
        }
        let spec: ScenarioSpec = value.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        ScenarioSpec::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()?).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Builtin scenario by name.
pub fn by_name(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    match name {
        "range_angle" => Ok(range_angle()),
        "range_only" => Ok(range_only()),
        "projectile" => Ok(projectile()),
        "orbit" => Ok(orbit()),
        "bimodal" => Ok(bimodal()),
        "linear_gaussian" => Ok(linear_gaussian()),
        _ => Err(ScenarioError::UnknownScenario {
            name: name.to_string(),
            valid: NAMES.join(", "),
        }),
    }
}

fn static_settings(n_scout: usize) -> FilterSettings {
    FilterSettings {
        n_predict: 1000,
        n_update: 1000,
        n_scout,
        ..FilterSettings::default()
    }
}

impl ScenarioSpec {
    pub fn range_angle() -> ScenarioSpec {
        range_angle()
    }
    pub fn range_only() -> ScenarioSpec {
        range_only()
    }
    pub fn projectile() -> ScenarioSpec {
        projectile()
    }
    pub fn orbit() -> ScenarioSpec {
        orbit()
    }
    pub fn bimodal() -> ScenarioSpec {
        bimodal()
    }
    pub fn linear_gaussian() -> ScenarioSpec {
        linear_gaussian()
    }
}

fn range_angle() -> ScenarioSpec {
    let sigma_angle = 20f64.to_radians();
    ScenarioSpec {
        name: "range_angle".into(),
        description: "static 2-D position observed by range and bearing".into(),
        t0: 0.0,
        dynamics: DynamicsModel::Static,
        measurement: MeasurementModel::RangeBearing,
        prior_mean: vec![0.3, 0.4],
        prior_cov: diag(&[0.01, 0.02]),
        process_noise: None,
        measurement_noise: diag(&[0.015 * 0.015, sigma_angle * sigma_angle]),
        schedule: Schedule::Single { time: 0.0 },
        truth: TruthRule::FixedObservation {
            observation: vec![0.2, 0.0],
            state: None,
        },
        filter: static_settings(50),
    }
}

fn range_only() -> ScenarioSpec {
    ScenarioSpec {
        name: "range_only".into(),
        description: "static 2-D position observed by range alone".into(),
        t0: 0.0,
        dynamics: DynamicsModel::Static,
        measurement: MeasurementModel::Range,
        prior_mean: vec![0.2, 0.4],
        prior_cov: diag(&[0.01, 0.02]),
        process_noise: None,
        measurement_noise: diag(&[0.015 * 0.015]),
        schedule: Schedule::Single { time: 0.0 },
        truth: TruthRule::FixedObservation {
            observation: vec![0.1],
            state: None,
        },
        filter: FilterSettings {
            augmentation: Augmentation::Custom {
                model: MeasurementModel::Bearing,
            },
            ..static_settings(50)
        },
    }
}

fn projectile() -> ScenarioSpec {
    let dt = 0.2;
    let g = 9.81;
    ScenarioSpec {
        name: "projectile".into(),
        description: "projectile under gravity and wind, tracked by a range-bearing radar at the origin".into(),
        t0: 0.0,
        dynamics: DynamicsModel::Linear {
            matrix: vec![
                vec![1.0, 0.0, dt, 0.0],
                vec![0.0, 1.0, 0.0, dt],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
            forcing: vec![0.0, -0.5 * g * dt * dt, 0.0, -g * dt],
        },
        measurement: MeasurementModel::RangeBearing,
        prior_mean: vec![0.0, 0.0, 1.0, 12.0],
        prior_cov: diag(&[0.01; 4]),
        process_noise: Some(diag(&[0.0005, 0.0005, 0.0025, 0.0025])),
        measurement_noise: diag(&[1e-5, 1e-6]),
        schedule: Schedule::Uniform { dt, steps: 12 },
        truth: TruthRule::SamplePrior,
        filter: static_settings(100),
    }
}

fn orbit() -> ScenarioSpec {
    let arcsec = (1.0f64 / 3600.0).to_radians();
    let p0 = diag(&[30.0, 30.0, 30.0, 0.01, 0.01, 0.01]);
    ScenarioSpec {
        name: "orbit".into(),
        description: "LEO orbit determination with J2 and J3, two observation windows a day".into(),
        t0: 0.0,
        dynamics: DynamicsModel::Orbit(OrbitModel::default()),
        measurement: MeasurementModel::RangeAzimuthElevation,
        prior_mean: vec![-2012.151, -381.450, 6316.615, 5.400366, -5.916814, 1.362965],
        prior_cov: p0,
        process_noise: None,
        measurement_noise: diag(&[1.0, arcsec * arcsec, arcsec * arcsec]),
        schedule: Schedule::Bursts {
            count: 6,
            spacing: 120.0,
            period: 43_200.0,
            windows: 3,
            start: 0.0,
        },
        truth: TruthRule::SamplePrior,
        filter: FilterSettings {
            n_predict: 1000,
            n_update: 1000,
            n_scout: 100,
            scout_refinements: 4,
            augmentation: Augmentation::PriorAxes,
            prediction: PredictionMode::Direct,
            ..FilterSettings::default()
        },
    }
}

fn bimodal() -> ScenarioSpec {
    ScenarioSpec {
        name: "bimodal".into(),
        description: "scalar growth model with a quadratic sensor".into(),
        t0: 0.0,
        dynamics: DynamicsModel::Bimodal {
            a: 0.5,
            b: 25.0,
            c: 8.0,
            omega: 1.2,
        },
        measurement: MeasurementModel::Quadratic { scale: 20.0 },
        prior_mean: vec![0.1],
        prior_cov: vec![vec![2.0]],
        process_noise: Some(vec![vec![10.0]]),
        measurement_noise: vec![vec![1.0]],
        schedule: Schedule::Uniform { dt: 1.0, steps: 25 },
        truth: TruthRule::SamplePrior,
        filter: FilterSettings {
            n_predict: 50,
            n_update: 50,
            n_scout: 20,
            prediction: PredictionMode::Direct,
            ..FilterSettings::default()
        },
    }
}

fn linear_gaussian() -> ScenarioSpec {
    ScenarioSpec {
        name: "linear_gaussian".into(),
        description: "scalar conjugate problem with a closed-form posterior N(0.5, 0.5)".into(),
        t0: 0.0,
        dynamics: DynamicsModel::Static,
        measurement: MeasurementModel::Components { indices: vec![0] },
        prior_mean: vec![0.0],
        prior_cov: vec![vec![1.0]],
        process_noise: None,
        measurement_noise: vec![vec![1.0]],
        schedule: Schedule::Single { time: 0.0 },
        truth: TruthRule::FixedObservation {
            observation: vec![1.0],
            state: Some(vec![0.5]),
        },
        filter: FilterSettings {
            n_predict: 10_000,
            n_update: 10_000,
            n_scout: 50,
            ..FilterSettings::default()
        },
    }
}

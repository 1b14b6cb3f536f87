use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::polyalg::DEFAULT_CONDITION_LIMIT;
use crate::scenarios::MeasurementModel;

use super::FilterError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Bpf,
    SisEkf,
    SisUkf,
    Gpf,
    Apf,
    Spf1,
    Spf2,
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        FilterKind::Bpf,
        FilterKind::SisEkf,
        FilterKind::SisUkf,
        FilterKind::Gpf,
        FilterKind::Apf,
        FilterKind::Spf1,
        FilterKind::Spf2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Bpf => "bpf",
            FilterKind::SisEkf => "sis-ekf",
            FilterKind::SisUkf => "sis-ukf",
            FilterKind::Gpf => "gpf",
            FilterKind::Apf => "apf",
            FilterKind::Spf1 => "spf1",
            FilterKind::Spf2 => "spf2",
        }
    }

    pub fn spf_variant(self) -> Option<SpfVariant> {
        match self {
            FilterKind::Spf1 => Some(SpfVariant::UniformBox),
            FilterKind::Spf2 => Some(SpfVariant::Gaussian),
            _ => None,
        }
    }

    pub fn from_variant(v: SpfVariant) -> FilterKind {
        match v {
            SpfVariant::UniformBox => FilterKind::Spf1,
            SpfVariant::Gaussian => FilterKind::Spf2,
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FilterError::Config(format!("unknown filter {s:?}")))
    }
}

/// Importance density fitted to the scout cloud.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpfVariant {
    UniformBox,
    Gaussian,
}

impl FromStr for SpfVariant {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform-box" | "uniform" | "box" => Ok(SpfVariant::UniformBox),
            "gaussian" => Ok(SpfVariant::Gaussian),
            _ => Err(FilterError::Config(format!("unknown variant {s:?} (uniform-box, gaussian)"))),
        }
    }
}

/// Half-width rule of the uniform importance box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxRule {
    /// `3 √P_s[j,j]` on axis `j`.
    PerAxis,
    /// `3 trace(S_s)` on every axis, with `S_s S_sᵀ = P_s`.
    Trace,
}

/// Rows appended to a measurement map with fewer rows than states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Augmentation {
    /// Identity rows on the state components the measurement observes least.
    Identity,
    Custom { model: MeasurementModel },
    /// The state pulled back to the previous observation time and projected
    /// on principal axes of the previous belief. Axes are chosen to best
    /// condition the noise-whitened stack of measurement and fictitious rows,
    /// and fictitious coordinates are drawn from their exact prior.
    PriorAxes,
}

/// Prior density used for `w_PRE` in importance-sampling updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorWeight {
    /// `N(x | x̂⁻, P⁻)`.
    Gaussian,
    /// Previous Gaussian belief at the backward-propagated particle. Exact
    /// without process noise when the flow has a constant Jacobian
    /// determinant; otherwise the Gaussian rule is used.
    Pullback,
}

/// Distribution of the fictitious coordinates of each scout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FictitiousSpread {
    /// `N(q̄, P_q)` with `P_q = H P⁻ Hᵀ`, independent of the real rows.
    Marginal,
    /// Linearized conditional of `q` given the scout's real rows:
    /// `N(q̄ + C_qy C_yy⁻¹ (y − ȳ), P_q − C_qy C_yy⁻¹ C_yq)`.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Resampling {
    /// Redraw from the Gaussian fitted to the posterior, every step.
    GpfGaussian,
    /// Multinomial resampling when `N_eff / N` drops below `threshold`.
    EssMultinomial { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateSelector {
    AlwaysScout,
    /// Scout update when `‖P_s‖_F < ‖P⁻‖_F`.
    FrobeniusScout,
    /// Scout update when `‖P_q‖_F < ‖P⁻‖_F`; falls back to the scout
    /// covariance when no fictitious rows were needed.
    FrobeniusFictitious,
}

/// How particle measurements are computed for the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodEval {
    /// Evaluate the truncated measurement map about the predicted mean.
    Polynomial,
    /// Evaluate the measurement function itself.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictionMode {
    /// Evaluate a polynomial flow expansion about the current mean.
    Pstm,
    /// Propagate every particle through the dynamics.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Tuning shared by every filter kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    /// Particles drawn in the prediction step (`N_p`).
    pub n_predict: usize,
    /// Particles drawn in the update step (`N_u`).
    pub n_update: usize,
    /// Scout particles (`N_s`).
    pub n_scout: usize,
    /// Chord iterations polishing each scout against the forward square map.
    pub scout_refinements: usize,
    pub order: u32,
    pub box_rule: BoxRule,
    pub augmentation: Augmentation,
    pub fictitious: FictitiousSpread,
    pub resampling: Resampling,
    pub prior_weight: PriorWeight,
    pub selector: UpdateSelector,
    pub likelihood: LikelihoodEval,
    pub prediction: PredictionMode,
    pub ukf: UkfParams,
    pub condition_limit: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            n_predict: 1000,
            n_update: 1000,
            n_scout: 50,
            scout_refinements: 0,
            order: 3,
            box_rule: BoxRule::PerAxis,
            augmentation: Augmentation::Identity,
            fictitious: FictitiousSpread::Marginal,
            resampling: Resampling::GpfGaussian,
            prior_weight: PriorWeight::Gaussian,
            selector: UpdateSelector::FrobeniusScout,
            likelihood: LikelihoodEval::Direct,
            prediction: PredictionMode::Pstm,
            ukf: UkfParams::default(),
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

impl FilterSettings {
    /// Sets `N_p = N_u = n`.
    pub fn with_particles(mut self, n: usize) -> Self {
        self.n_predict = n;
        self.n_update = n;
        self
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n_predict == 0 || self.n_update == 0 || self.n_scout == 0 {
            return Err(FilterError::Config("particle counts must be at least one".into()));
        }
        if self.order == 0 {
            return Err(FilterError::Config("truncation order must be at least one".into()));
        }
        if let Resampling::EssMultinomial { threshold } = self.resampling {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(FilterError::Config(format!("ESS threshold {threshold} outside (0, 1]")));
            }
        }
        if !(self.condition_limit > 1.0) {
            return Err(FilterError::Config("condition limit must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub settings: FilterSettings,
}

impl FilterConfig {
    pub fn new(kind: FilterKind, settings: FilterSettings) -> Self {
        FilterConfig { kind, settings }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_names_round_trip() {
        for k in FilterKind::ALL {
            assert_eq!(k.name().parse::<FilterKind>().unwrap(), k);
        }
        assert!("kalman".parse::<FilterKind>().is_err());
    }

    #[test]
    fn validation() {
        assert!(FilterSettings::default().validate().is_ok());
        let bad = FilterSettings {
            resampling: Resampling::EssMultinomial { threshold: 0.0 },
            ..FilterSettings::default()
        };
        assert!(bad.validate().is_err());
        assert!(FilterSettings::default().with_particles(0).validate().is_err());
    }
}

//! Log-domain particle weights.
//!
//! Weights are handled through their exponents `b_i` (`a_i = C exp(b_i)`).
//! The normalized weight is `w_i = 1 / Σ_j exp(b_j − b_i)`, which only
//! involves differences of exponents. Factoring out the largest exponent
//! `b*` gives `Σ_j exp(b_j − b_i) = exp(b* − b_i) Σ_j exp(b_j − b*)`, so the
//! sum is formed once and every weight costs one exponential.

use super::StochasticError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogWeights {
    values: Vec<f64>,
}

impl LogWeights {
    pub fn new(values: Vec<f64>) -> Self {
        LogWeights { values }
    }

    pub fn uniform(n: usize) -> Self {
        LogWeights {
            values: vec![0.0; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Normalized weights summing to one.
    pub fn normalize(&self) -> Result<Vec<f64>, StochasticError> {
        normalize_logweights(&self.values)
    }
}

pub fn normalize_logweights(b: &[f64]) -> Result<Vec<f64>, StochasticError> {
    if b.is_empty() {
        return Err(StochasticError::InvalidCount);
    }
    if b.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(StochasticError::NonFinite);
    }
    let top = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(StochasticError::Degenerate);
    }
    let total: f64 = b.iter().map(|v| (v - top).exp()).sum();
    Ok(b.iter()
        .map(|v| {
            if *v == f64::NEG_INFINITY {
                0.0
            } else {
                1.0 / ((top - v).exp() * total)
            }
        })
        .collect())
}

/// Effective sample size and its percentage of the particle count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub n_eff: f64,
    /// `100 · N_eff / N`.
    pub psi: f64,
}

/// `N_eff = 1 / Σ w_i²` for normalized weights.
pub fn effective_sample_size(w: &[f64]) -> Ess {
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let n_eff = if s2 > 0.0 { 1.0 / s2 } else { 0.0 };
    let n_eff = n_eff.clamp(1.0_f64.min(w.len() as f64), w.len() as f64);
    Ess {
        n_eff,
        psi: 100.0 * n_eff / w.len().max(1) as f64,
    }
}

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::stochastic::{effective_sample_size, weighted_moments, Ess, GaussianDensity, LogWeights, StochasticError};

/// Weighted particle set.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub particles: Vec<DVector<f64>>,
    pub logweights: LogWeights,
}

impl Ensemble {
    pub fn new(particles: Vec<DVector<f64>>, logweights: LogWeights) -> Result<Self, StochasticError> {
        if particles.len() != logweights.len() {
            return Err(StochasticError::DimensionMismatch {
                expected: particles.len(),
                got: logweights.len(),
            });
        }
        if particles.is_empty() {
            return Err(StochasticError::InvalidCount);
        }
        Ok(Ensemble { particles, logweights })
    }

    pub fn uniform(particles: Vec<DVector<f64>>) -> Self {
        let n = particles.len();
        Ensemble {
            particles,
            logweights: LogWeights::uniform(n),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles.first().map_or(0, |p| p.len())
    }

    pub fn weights(&self) -> Result<Vec<f64>, StochasticError> {
        self.logweights.normalize()
    }

    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>), StochasticError> {
        Ok(weighted_moments(&self.particles, &self.weights()?))
    }

    pub fn ess(&self) -> Result<Ess, StochasticError> {
        Ok(effective_sample_size(&self.weights()?))
    }

    /// Number of bitwise-distinct particles.
    pub fn distinct_count(&self) -> usize {
        let mut keys: Vec<Vec<u64>> = self
            .particles
            .iter()
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

/// State density carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    Gaussian(GaussianDensity),
    Ensemble(Ensemble),
}

impl Belief {
    pub fn dim(&self) -> usize {
        match self {
            Belief::Gaussian(g) => g.mean().len(),
            Belief::Ensemble(e) => e.dim(),
        }
    }

    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>), StochasticError> {
        match self {
            Belief::Gaussian(g) => Ok((g.mean().clone(), g.cov().clone())),
            Belief::Ensemble(e) => e.moments(),
        }
    }
}

/// Symmetrizes `p` and clips negative eigenvalues to zero.
pub fn repair_psd(p: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_clips_negative_directions() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let r = repair_psd(&p);
        let eig = SymmetricEigen::new(r.clone());
        assert!(eig.eigenvalues.iter().all(|v| *v >= -1e-14));
        assert!((r[(0, 0)] - 1.5).abs() < 1e-12);
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(repair_psd(&ok), ok);
    }

    #[test]
    fn distinct_particles() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.5]);
        let e = Ensemble::uniform(vec![a.clone(), b, a]);
        assert_eq!(e.distinct_count(), 2);
    }
}

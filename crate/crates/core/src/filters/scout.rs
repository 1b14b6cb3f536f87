use nalgebra::{DMatrix, DVector};

use crate::polyalg::PolynomialMap;
use crate::scenarios::wrap_masked;
use crate::stochastic::{weighted_moments, Density, GaussianDensity, RngStream, StochasticError, UniformBoxDensity};

use super::config::{BoxRule, FictitiousSpread, FilterSettings, SpfVariant};
use super::measure::SquareMap;
use super::FilterError;

/// Scout particles in measurement and state space.
#[derive(Debug, Clone)]
pub struct ScoutSet {
    /// Augmented measurement-space samples `y_s`.
    pub measurements: Vec<DVector<f64>>,
    /// `x_s = x̂⁻ + W(y_s - ȳ)`.
    pub states: Vec<DVector<f64>>,
    /// `x̂_s`.
    pub mean: DVector<f64>,
    /// `P_s`, with weights `1 / N_s`.
    pub cov: DMatrix<f64>,
    /// Inverse of the square measurement map.
    pub inverse: PolynomialMap,
    /// Scouts in the domain of a lifted square map.
    pub domain: Option<Vec<DVector<f64>>>,
}

/// Draws scouts around the observation and maps them into state space.
///
/// True-measurement coordinates come from `N(ỹ, R)` restricted to the
/// selected rows, fictitious ones as set by `spread`.
#[allow(clippy::too_many_arguments)]
pub fn scout(
    square: &SquareMap,
    x_pred: &DVector<f64>,
    observed: &[f64],
    meas_cov: &DMatrix<f64>,
    settings: &FilterSettings,
    rng: &mut RngStream,
) -> Result<ScoutSet, FilterError> {
    let n_scout = settings.n_scout;
    let n = x_pred.len();
    if n_scout < n + 1 {
        return Err(FilterError::TooFewScouts {
            got: n_scout,
            needed: n + 1,
        });
    }
    let inverse = square.map.invert_with_limit(settings.condition_limit)?;
    let chord = match settings.scout_refinements {
        0 => None,
        _ => Some(square.map.linear_part().lu()),
    };

    let rows = &square.rows;
    let y_sel = DVector::from_iterator(rows.len(), rows.iter().map(|&r| observed[r]));
    let r_sel = meas_cov.select_rows(rows.iter()).select_columns(rows.iter());
    let meas = GaussianDensity::new_symmetrized(y_sel, r_sel.clone())?.sample(n_scout, rng)?;
    let center = square.map.center_out();
    let fict = match &square.fictitious {
        Some(f) => Some(match settings.fictitious {
            FictitiousSpread::Marginal => {
                GaussianDensity::new_symmetrized(f.center.clone(), f.cov.clone())?.sample(n_scout, rng)?
            }
            FictitiousSpread::Conditional => {
                let m = rows.len();
                let c_yy = &f.real_spread + &r_sel;
                let chol = c_yy.clone().cholesky().ok_or(StochasticError::NotPsd)?;
                // gain = C_qy C_yy⁻¹
                let gain = chol.solve(&f.cross.transpose()).transpose();
                let cond = &f.cov - &gain * f.cross.transpose();
                let base = GaussianDensity::new_symmetrized(DVector::zeros(f.center.len()), crate::filters::repair_psd(&cond))?
                    .sample(n_scout, rng)?;
                let real_mask = &square.angle_mask[..m];
                meas.iter()
                    .zip(base)
                    .map(|(y, z)| {
                        let dy = DVector::from_vec(wrap_masked(real_mask, y.as_slice(), &center[..m]));
                        &f.center + &gain * dy + z
                    })
                    .collect()
            }
        }),
        None => None,
    };

    let mut measurements = Vec::with_capacity(n_scout);
    let mut states = Vec::with_capacity(n_scout);
    let mut domain = Vec::with_capacity(n_scout);
    for i in 0..n_scout {
        let mut y = meas[i].as_slice().to_vec();
        if let Some(f) = &fict {
            y.extend_from_slice(f[i].as_slice());
        }
        let dy = wrap_masked(&square.angle_mask, &y, center);
        let mut dx = inverse.evaluate(&dy)?;
        if let Some(lu) = &chord {
            for _ in 0..settings.scout_refinements {
                let image = square.map.evaluate(&dx)?;
                let miss = DVector::from_vec(wrap_masked(&square.angle_mask, &dy, &image));
                let step = lu.solve(&miss).ok_or(StochasticError::Singular)?;
                for (d, s) in dx.iter_mut().zip(step.iter()) {
                    *d += s;
                }
            }
        }
        match &square.lift {
            Some(lift) => {
                states.push(DVector::from_vec(lift.flow.evaluate_absolute(&dx)?));
                domain.push(DVector::from_column_slice(lift.flow.center_in()) + DVector::from_vec(dx));
            }
            None => states.push(x_pred + DVector::from_vec(dx)),
        }
        measurements.push(DVector::from_vec(y));
    }
    if states.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(FilterError::Divergence("non-finite scout state".into()));
    }
    let w = vec![1.0 / n_scout as f64; n_scout];
    let (mean, cov) = weighted_moments(&states, &w);
    Ok(ScoutSet {
        measurements,
        states,
        mean,
        cov,
        inverse,
        domain: square.lift.is_some().then_some(domain),
    })
}

/// Importance density built from scout statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum Importance {
    Box(UniformBoxDensity),
    Gaussian(GaussianDensity),
}

/// Scout importance density, over the state or over the domain of a lift.
#[derive(Debug, Clone)]
pub struct ScoutImportance {
    pub density: Importance,
    /// Flow taking samples of `density` to the current state.
    pub lift: Option<PolynomialMap>,
}

impl Importance {
    /// Mean of the Gaussian, center of the box.
    pub fn center(&self) -> &DVector<f64> {
        match self {
            Importance::Box(b) => b.center(),
            Importance::Gaussian(g) => g.mean(),
        }
    }
}

impl Density for Importance {
    fn dim(&self) -> usize {
        match self {
            Importance::Box(b) => b.dim(),
            Importance::Gaussian(g) => g.dim(),
        }
    }

    fn sample(&self, n: usize, rng: &mut RngStream) -> Result<Vec<DVector<f64>>, StochasticError> {
        match self {
            Importance::Box(b) => b.sample(n, rng),
            Importance::Gaussian(g) => g.sample(n, rng),
        }
    }

    fn logpdf(&self, x: &DVector<f64>) -> Result<f64, StochasticError> {
        match self {
            Importance::Box(b) => b.logpdf(x),
            Importance::Gaussian(g) => g.logpdf(x),
        }
    }
}

/// Uniform box or Gaussian around `(x̂_s, P_s)`; errors when `P_s` is
/// degenerate.
pub fn importance_density(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    variant: SpfVariant,
    rule: BoxRule,
) -> Result<Importance, FilterError> {
    let g = GaussianDensity::new_symmetrized(mean.clone(), cov.clone())?;
    if g.is_degenerate() {
        return Err(StochasticError::Singular.into());
    }
    Ok(match variant {
        SpfVariant::Gaussian => Importance::Gaussian(g),
        SpfVariant::UniformBox => {
            let n = mean.len();
            let widths = match rule {
                BoxRule::PerAxis => DVector::from_fn(n, |j, _| 3.0 * cov[(j, j)].sqrt()),
                BoxRule::Trace => DVector::from_element(n, 3.0 * g.factor().trace()),
            };
            Importance::Box(UniformBoxDensity::new(mean.clone(), widths)?)
        }
    })
}

/// Draws `n` particles and their log importance density.
pub fn importance_sample<D: Density>(
    density: &D,
    n: usize,
    rng: &mut RngStream,
) -> Result<(Vec<DVector<f64>>, Vec<f64>), FilterError> {
    let particles = density.sample(n, rng)?;
    let log_q = particles
        .iter()
        .map(|x| density.logpdf(x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((particles, log_q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::config::Augmentation;
    use crate::filters::measure::build_measurement_map;
    use crate::scenarios::MeasurementModel;

    fn settings(n_scout: usize) -> FilterSettings {
        FilterSettings {
            n_scout,
            condition_limit: 1e12,
            ..FilterSettings::default()
        }
    }

    #[test]
    fn zero_noise_scouts_sit_on_the_center() {
        let x = DVector::from_vec(vec![0.3, 0.4]);
        let p = DMatrix::identity(2, 2) * 0.01;
        let mm = build_measurement_map(&x, &p, &MeasurementModel::RangeBearing, &Augmentation::Identity, 3, None).unwrap();
        let ybar = mm.full.center_out().to_vec();
        let s = scout(&mm.square, &x, &ybar, &DMatrix::zeros(2, 2), &settings(10), &mut RngStream::new(1, 0)).unwrap();
        for xs in &s.states {
            assert!((xs - &x).amax() < 1e-15);
        }
        assert!(s.cov.amax() < 1e-30);
    }

    #[test]
    fn linear_measurement_pushes_noise_through_the_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let model = MeasurementModel::Linear {
            matrix: vec![vec![2.0, 1.0], vec![0.0, 1.0]],
        };
        let x = DVector::from_vec(vec![1.0, -1.0]);
        let mm = build_measurement_map(&x, &DMatrix::identity(2, 2), &model, &Augmentation::Identity, 2, None).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[0.04, 0.0, 0.0, 0.01]);
        let y = [1.5, -0.5];
        let ns = 20_000;
        let s = scout(&mm.square, &x, &y, &r, &settings(ns), &mut RngStream::new(9, 0)).unwrap();
        let ainv = a.clone().try_inverse().unwrap();
        let ybar = DVector::from_column_slice(mm.full.center_out());
        let expect_mean = &x + &ainv * (DVector::from_column_slice(&y) - ybar);
        let expect_cov = &ainv * &r * ainv.transpose();
        for j in 0..2 {
            let se = (expect_cov[(j, j)] / ns as f64).sqrt();
            assert!((s.mean[j] - expect_mean[j]).abs() < 4.0 * se);
        }
        assert!((&s.cov - &expect_cov).amax() < 0.05 * expect_cov.amax());
    }

    #[test]
    fn too_few_scouts() {
        let x = DVector::from_vec(vec![0.3, 0.4]);
        let mm = build_measurement_map(&x, &DMatrix::identity(2, 2), &MeasurementModel::RangeBearing, &Augmentation::Identity, 3, None).unwrap();
        let r = scout(&mm.square, &x, &[0.5, 0.9], &DMatrix::identity(2, 2), &settings(2), &mut RngStream::new(1, 0));
        assert!(matches!(r, Err(FilterError::TooFewScouts { got: 2, needed: 3 })));
    }

    #[test]
    fn importance_variants() {
        let m = DVector::from_vec(vec![1.0, 2.0]);
        let c = DMatrix::identity(2, 2);
        let g = importance_density(&m, &c, SpfVariant::Gaussian, BoxRule::PerAxis).unwrap();
        let lp = g.logpdf(&m).unwrap();
        assert!((lp + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);

        let b = importance_density(&m, &c, SpfVariant::UniformBox, BoxRule::PerAxis).unwrap();
        let (xs, lq) = importance_sample(&b, 500, &mut RngStream::new(3, 0)).unwrap();
        let Importance::Box(bx) = &b else { panic!() };
        assert!(xs.iter().all(|x| bx.contains(x)));
        assert!(lq.iter().all(|v| *v == lq[0]));
        assert_eq!(bx.half_widths()[0], 3.0);

        let t = importance_density(&m, &c, SpfVariant::UniformBox, BoxRule::Trace).unwrap();
        let Importance::Box(tb) = &t else { panic!() };
        assert_eq!(tb.half_widths()[1], 6.0);

        assert!(importance_density(&m, &DMatrix::zeros(2, 2), SpfVariant::Gaussian, BoxRule::PerAxis).is_err());
    }
}

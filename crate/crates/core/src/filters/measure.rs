use nalgebra::{DMatrix, DVector};

use crate::polyalg::{PolynomialMap, Space, TruncatedPolynomial};
use crate::scenarios::{DynamicsModel, MeasurementModel};
use crate::stochastic::StochasticError;

use super::config::Augmentation;
use super::predict::StepContext;
use super::FilterError;

/// Functions supplying the fictitious rows.
#[derive(Debug, Clone, PartialEq)]
pub enum FictitiousRows {
    Measurement(MeasurementModel),
    /// Principal axes of the previous belief, by ascending variance rank.
    PriorAxes { axes: Vec<usize> },
}

/// Belief at the previous observation and the flow leading from it.
#[derive(Debug, Clone, Copy)]
pub struct PreviousState<'a> {
    pub dynamics: &'a DynamicsModel,
    pub ctx: StepContext,
    pub mean: &'a DVector<f64>,
    pub cov: &'a DMatrix<f64>,
    /// Measurement noise covariance, used to whiten the real rows.
    pub meas_cov: &'a DMatrix<f64>,
}

/// Fictitious coordinates appended to make the map square.
#[derive(Debug, Clone)]
pub struct Fictitious {
    pub rows: FictitiousRows,
    /// Mean the fictitious coordinates are drawn around: `q(x̂⁻)`, or the
    /// exact prior mean for [`FictitiousRows::PriorAxes`].
    pub center: DVector<f64>,
    /// `H = ∂q/∂x` at `x̂⁻`.
    pub jacobian: DMatrix<f64>,
    /// `P_q = H P⁻ Hᵀ`, or the exact prior variances.
    pub cov: DMatrix<f64>,
    /// `C_qy = H P⁻ H_yᵀ` against the real rows.
    pub cross: DMatrix<f64>,
    /// `H_y P⁻ H_yᵀ` of the real rows.
    pub real_spread: DMatrix<f64>,
}

/// Square map used for scouting.
#[derive(Debug, Clone)]
pub struct SquareMap {
    pub map: PolynomialMap,
    /// Measurement rows feeding the square map, in order.
    pub rows: Vec<usize>,
    pub fictitious: Option<Fictitious>,
    /// Angle flags of the square map's outputs.
    pub angle_mask: Vec<bool>,
    /// Present when the map is expanded over previous-state coordinates.
    pub lift: Option<Lift>,
}

/// Link between previous-state coordinates and the current state.
#[derive(Debug, Clone)]
pub struct Lift {
    /// Flow from previous-state coordinates to the current state.
    pub flow: PolynomialMap,
    /// Previous mean.
    pub prior_mean: DVector<f64>,
    /// Information of the previous belief along the axes not used as
    /// fictitious rows.
    pub residual_info: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct MeasurementMap {
    /// All measurement rows about `x̂⁻`.
    pub full: PolynomialMap,
    pub square: SquareMap,
}

fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Greedily picks `count` rows of `h` maximizing the smallest singular value
/// of the chosen submatrix. Ties go to the lower index.
pub fn select_rows(h: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..h.nrows()).filter(|i| !chosen.contains(i)) {
            let mut rows = chosen.clone();
            rows.push(i);
            let sub = h.select_rows(rows.iter());
            let s = smallest_singular_value(&sub);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        if let Some((i, _)) = best {
            chosen.push(i);
        }
    }
    chosen
}

/// Greedily picks `count` rows of `candidates` which, stacked under `h`,
/// maximize the smallest singular value. Returned in ascending order.
pub fn select_augmenting_rows(h: &DMatrix<f64>, candidates: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let n = h.ncols();
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..candidates.nrows()).filter(|j| !chosen.contains(j)) {
            let mut stacked = DMatrix::zeros(h.nrows() + chosen.len() + 1, n);
            stacked.rows_mut(0, h.nrows()).copy_from(h);
            for (r, &c) in chosen.iter().chain(std::iter::once(&j)).enumerate() {
                stacked.row_mut(h.nrows() + r).copy_from(&candidates.row(c));
            }
            let s = smallest_singular_value(&stacked);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        if let Some((j, _)) = best {
            chosen.push(j);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Greedily picks `count` state components whose unit rows, stacked under
/// `h`, maximize the smallest singular value.
pub fn select_identity_components(h: &DMatrix<f64>, count: usize) -> Vec<usize> {
    select_augmenting_rows(h, &DMatrix::identity(h.ncols(), h.ncols()), count)
}

/// Subset of `count` rows of `candidates` maximizing `|det|` of the square
/// stack under `h`, by exhaustive search. Ties go to the earlier subset.
pub fn most_informative_rows(h: &DMatrix<f64>, candidates: &DMatrix<f64>, count: usize) -> Vec<usize> {
    fn visit(
        start: usize,
        chosen: &mut Vec<usize>,
        count: usize,
        h: &DMatrix<f64>,
        candidates: &DMatrix<f64>,
        best: &mut (f64, Vec<usize>),
    ) {
        if chosen.len() == count {
            let mut stacked = DMatrix::zeros(h.nrows() + count, h.ncols());
            stacked.rows_mut(0, h.nrows()).copy_from(h);
            for (r, &c) in chosen.iter().enumerate() {
                stacked.row_mut(h.nrows() + r).copy_from(&candidates.row(c));
            }
            let d = stacked.determinant().abs();
            if d > best.0 {
                *best = (d, chosen.clone());
            }
            return;
        }
        for j in start..candidates.nrows() {
            chosen.push(j);
            visit(j + 1, chosen, count, h, candidates, best);
            chosen.pop();
        }
    }
    let mut best = (-1.0, (0..count).collect());
    visit(0, &mut Vec::with_capacity(count), count, h, candidates, &mut best);
    best.1
}

fn variables(center: &DVector<f64>, order: u32) -> Result<Vec<TruncatedPolynomial>, FilterError> {
    let space = Space::new(center.len(), order)?;
    Ok((0..center.len())
        .map(|i| TruncatedPolynomial::variable(&space, i).map(|v| v.add_scalar(center[i])))
        .collect::<Result<_, _>>()?)
}

/// Fictitious statistics from the linearized predicted covariance.
fn linearized(rows: FictitiousRows, q_map: PolynomialMap, h: &DMatrix<f64>, p_pred: &DMatrix<f64>) -> (PolynomialMap, Fictitious) {
    let jac = q_map.linear_part();
    let p_q = &jac * p_pred * jac.transpose();
    let real_spread = h * p_pred * h.transpose();
    let fict = Fictitious {
        rows,
        center: DVector::from_column_slice(q_map.center_out()),
        cov: (&p_q + p_q.transpose()) * 0.5,
        cross: &jac * p_pred * h.transpose(),
        real_spread: (&real_spread + real_spread.transpose()) * 0.5,
        jacobian: jac,
    };
    (q_map, fict)
}

/// Square map over previous-state coordinates with fictitious rows along
/// principal axes of the previous belief.
///
/// With `z = Vᵀ(x_prev − x̄_prev)` and `P_prev = V Λ Vᵀ`, each axis is
/// `N(0, λ)` a priori. The axes maximize `|det [R^{-1/2} G; Λ^{-1/2} Vᵀ]|`
/// over the selected rows, with `G = ∂h(f(x_prev))/∂x_prev`: the scouts then
/// carry as much of the posterior information as `count` axes allow. The
/// expansion point is the previous mean, where the belief is compact, and
/// the flow `f` lifts scouts to the current time. The mean of a curved
/// prediction need not lie on the flow's image, so `x̂⁻` is not used.
fn prior_axes(
    prev: &PreviousState,
    model: &MeasurementModel,
    order: u32,
) -> Result<SquareMap, FilterError> {
    let n = prev.mean.len();
    let m = model.dim();
    let count = n - m;
    let start = prev.mean.clone();
    let vars = variables(&start, order)?;
    let flow = prev.dynamics.propagate(&vars, prev.ctx.k, prev.ctx.t0, prev.ctx.t1)?;
    let real = PolynomialMap::from_absolute(start.as_slice().to_vec(), model.measure(&flow)?)?;
    let flow = PolynomialMap::from_absolute(start.as_slice().to_vec(), flow)?;
    let g = real.linear_part();

    let eig = nalgebra::SymmetricEigen::new((prev.cov + prev.cov.transpose()) * 0.5);
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let lambda: Vec<f64> = rank.iter().map(|&k| eig.eigenvalues[k].max(f64::MIN_POSITIVE)).collect();
    let v = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, rank[j])]);

    let chol = prev.meas_cov.clone().cholesky().ok_or(StochasticError::NotPsd)?;
    let g_white = chol.l().solve_lower_triangular(&g).ok_or(StochasticError::Singular)?;
    let candidates = DMatrix::from_fn(n, n, |j, c| v[(c, j)] / lambda[j].sqrt());
    let axes = most_informative_rows(&g_white, &candidates, count);

    let v_sel = v.select_columns(axes.iter());
    let offset = &start - prev.mean;
    let center_out = (v_sel.transpose() * offset).as_slice().to_vec();
    let q_map = PolynomialMap::linear(real.space(), &v_sel.transpose(), start.as_slice().to_vec(), center_out)?;

    let lam_sel = DMatrix::from_diagonal(&DVector::from_iterator(count, axes.iter().map(|&j| lambda[j])));
    let real_spread = &g * prev.cov * g.transpose();
    let b = flow.linear_part().try_inverse().ok_or(StochasticError::Singular)?;
    let rest: Vec<usize> = (0..n).filter(|j| !axes.contains(j)).collect();
    let v_rest = v.select_columns(rest.iter());
    let inv_rest = DMatrix::from_diagonal(&DVector::from_iterator(rest.len(), rest.iter().map(|&j| 1.0 / lambda[j])));
    let residual_info = &v_rest * inv_rest * v_rest.transpose();
    let fict = Fictitious {
        rows: FictitiousRows::PriorAxes { axes },
        center: DVector::zeros(count),
        cross: &lam_sel * v_sel.transpose() * g.transpose(),
        cov: lam_sel,
        real_spread: (&real_spread + real_spread.transpose()) * 0.5,
        jacobian: v_sel.transpose() * b,
    };
    let mut angle_mask = model.angle_mask();
    angle_mask.extend(std::iter::repeat_n(false, count));
    Ok(SquareMap {
        map: real.stack(&q_map)?,
        rows: (0..m).collect(),
        fictitious: Some(fict),
        angle_mask,
        lift: Some(Lift {
            flow,
            prior_mean: prev.mean.clone(),
            residual_info,
        }),
    })
}

/// Polynomial inverse of the flow from `ctx.t0` to `ctx.t1`, about `x`.
pub fn pullback_map(
    dynamics: &DynamicsModel,
    x: &DVector<f64>,
    order: u32,
    ctx: StepContext,
) -> Result<PolynomialMap, FilterError> {
    let start = DVector::from_vec(dynamics.propagate_back(x.as_slice(), ctx.k, ctx.t0, ctx.t1)?);
    let flow = dynamics.propagate(&variables(&start, order)?, ctx.k, ctx.t0, ctx.t1)?;
    let inverse = PolynomialMap::from_absolute(start.as_slice().to_vec(), flow)?.invert()?;
    // The flow of `start` matches `x` to roundoff; anchor the map at `x` exactly.
    Ok(PolynomialMap::new(
        x.as_slice().to_vec(),
        inverse.center_out().to_vec(),
        inverse.into_components(),
    )?)
}

/// Expansion of `model` about `center` as a deviation map.
pub fn expand(model: &MeasurementModel, center: &DVector<f64>, order: u32) -> Result<PolynomialMap, FilterError> {
    let y = model.measure(&variables(center, order)?)?;
    Ok(PolynomialMap::from_absolute(center.as_slice().to_vec(), y)?)
}

/// Measurement map about `x̂⁻` and its square counterpart for inversion.
///
/// With fewer measurements than states the map is completed by fictitious
/// rows; with more, `n` rows are selected while `full` keeps all of them.
/// `previous` is needed only by [`Augmentation::PriorAxes`].
pub fn build_measurement_map(
    x_pred: &DVector<f64>,
    p_pred: &DMatrix<f64>,
    model: &MeasurementModel,
    augmentation: &Augmentation,
    order: u32,
    previous: Option<&PreviousState>,
) -> Result<MeasurementMap, FilterError> {
    let n = x_pred.len();
    let m = model.dim();
    let full = expand(model, x_pred, order)?;
    let mask = model.angle_mask();
    let h = full.linear_part();

    let square = if m >= n {
        let rows = if m == n { (0..n).collect() } else { select_rows(&h, n) };
        SquareMap {
            map: full.select_rows(&rows)?,
            angle_mask: rows.iter().map(|&r| mask[r]).collect(),
            rows,
            fictitious: None,
            lift: None,
        }
    } else if let Augmentation::PriorAxes = augmentation {
        let prev = previous.ok_or_else(|| FilterError::Config("prior-axes augmentation needs the previous belief".into()))?;
        prior_axes(prev, model, order)?
    } else {
        let (q_model, q_map) = match augmentation {
            Augmentation::Custom { model } => {
                if model.dim() != n - m {
                    return Err(FilterError::Config(format!(
                        "augmentation supplies {} rows, {} needed",
                        model.dim(),
                        n - m
                    )));
                }
                (model.clone(), expand(model, x_pred, order)?)
            }
            _ => {
                let q_model = MeasurementModel::Components {
                    indices: select_identity_components(&h, n - m),
                };
                let q_map = expand(&q_model, x_pred, order)?;
                (q_model, q_map)
            }
        };
        let mut angle_mask = mask.clone();
        angle_mask.extend(q_model.angle_mask());
        let (q_map, fictitious) = linearized(FictitiousRows::Measurement(q_model), q_map, &h, p_pred);
        SquareMap {
            map: full.stack(&q_map)?,
            rows: (0..m).collect(),
            fictitious: Some(fictitious),
            angle_mask,
            lift: None,
        }
    };
    Ok(MeasurementMap { full, square })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_angle_map_is_square() {
        let x = DVector::from_vec(vec![0.3, 0.4]);
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02]));
        let mm = build_measurement_map(&x, &p, &MeasurementModel::RangeBearing, &Augmentation::Identity, 3, None).unwrap();
        assert!((mm.full.center_out()[0] - 0.5).abs() < 1e-15);
        assert!((mm.full.center_out()[1] - 0.4f64.atan2(0.3)).abs() < 1e-15);
        assert!(mm.square.fictitious.is_none());
        let j = mm.full.linear_part();
        let expect = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -1.6, 1.2]);
        assert!((j - expect).amax() < 1e-12);
    }

    #[test]
    fn range_only_with_angle_augmentation_matches_range_angle() {
        let x = DVector::from_vec(vec![0.2, 0.4]);
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02]));
        let aug = Augmentation::Custom {
            model: MeasurementModel::Bearing,
        };
        let mm = build_measurement_map(&x, &p, &MeasurementModel::Range, &aug, 3, None).unwrap();
        let reference = expand(&MeasurementModel::RangeBearing, &x, 3).unwrap();
        assert!(mm.square.map.max_coeff_diff(&reference) < 1e-15);
        let fict = mm.square.fictitious.unwrap();
        // angle gradient (-y, x) / r² = (-2, 1) at (0.2, 0.4)
        assert!((fict.cov[(0, 0)] - (4.0 * 0.01 + 0.02)).abs() < 1e-14);
        assert_eq!(mm.square.angle_mask, vec![false, true]);
    }

    #[test]
    fn identity_measurement_is_identity_map() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let model = MeasurementModel::Components { indices: vec![0, 1, 2] };
        let mm = build_measurement_map(&x, &DMatrix::identity(3, 3), &model, &Augmentation::Identity, 3, None).unwrap();
        let id = PolynomialMap::identity(mm.full.space(), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mm.full.components(), id.components());
    }

    #[test]
    fn identity_augmentation_fills_unobserved_components() {
        let x = DVector::from_vec(vec![1.0, 2.0, 0.5, 0.1]);
        let model = MeasurementModel::Components { indices: vec![0, 1] };
        let mm = build_measurement_map(&x, &DMatrix::identity(4, 4), &model, &Augmentation::Identity, 2, None).unwrap();
        let fict = mm.square.fictitious.unwrap();
        assert_eq!(fict.rows, FictitiousRows::Measurement(MeasurementModel::Components { indices: vec![2, 3] }));
    }

    #[test]
    fn row_selection_prefers_well_conditioned_rows() {
        let h = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.9, 1e-6, 0.0, 1.0]);
        assert_eq!(select_rows(&h, 2), vec![0, 2]);
    }
}

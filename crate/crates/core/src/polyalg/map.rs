use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::poly::TruncatedPolynomial;
use super::space::Space;
use super::PolyError;

/// Largest accepted condition number of the linear part in [`PolynomialMap::invert`].
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

/// Vector of truncated polynomials over a common space.
///
/// The map sends deviations `δx` from `center_in` to `center_out + map(δx)`.
/// For a deviation map every component has a zero constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMap {
    center_in: Vec<f64>,
    center_out: Vec<f64>,
    components: Vec<TruncatedPolynomial>,
}

impl PolynomialMap {
    pub fn new(
        center_in: Vec<f64>,
        center_out: Vec<f64>,
        components: Vec<TruncatedPolynomial>,
    ) -> Result<Self, PolyError> {
        let first = components.first().ok_or(PolyError::EmptyMap)?;
        let space = Arc::clone(first.space());
        for c in &components {
            if !c.space().same_shape(&space) {
                return Err(PolyError::ShapeMismatch {
                    left: (space.nvars(), space.order()),
                    right: (c.nvars(), c.order()),
                });
            }
        }
        if center_in.len() != space.nvars() {
            return Err(PolyError::LengthMismatch {
                expected: space.nvars(),
                got: center_in.len(),
            });
        }
        if center_out.len() != components.len() {
            return Err(PolyError::LengthMismatch {
                expected: components.len(),
                got: center_out.len(),
            });
        }
        Ok(PolynomialMap {
            center_in,
            center_out,
            components,
        })
    }

    /// Splits absolute polynomials `g(center_in + δx)` into `center_out = g(center_in)`
    /// and the deviation part.
    pub fn from_absolute(center_in: Vec<f64>, absolute: Vec<TruncatedPolynomial>) -> Result<Self, PolyError> {
        let center_out = absolute.iter().map(|p| p.constant_part()).collect();
        let components = absolute.iter().map(|p| p.nilpotent_part()).collect();
        Self::new(center_in, center_out, components)
    }

    pub fn identity(space: &Arc<Space>, center: Vec<f64>) -> Result<Self, PolyError> {
        let comps = (0..space.nvars())
            .map(|i| TruncatedPolynomial::variable(space, i))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(center.clone(), center, comps)
    }

    /// Linear map `δy = A δx` on `space`.
    pub fn linear(space: &Arc<Space>, a: &DMatrix<f64>, center_in: Vec<f64>, center_out: Vec<f64>) -> Result<Self, PolyError> {
        if a.ncols() != space.nvars() {
            return Err(PolyError::LengthMismatch {
                expected: space.nvars(),
                got: a.ncols(),
            });
        }
        let comps = (0..a.nrows())
            .map(|i| {
                let mut p = TruncatedPolynomial::zero(space);
                for j in 0..a.ncols() {
                    p.axpy(a[(i, j)], &TruncatedPolynomial::variable(space, j)?)?;
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>, PolyError>>()?;
        Self::new(center_in, center_out, comps)
    }

    pub fn space(&self) -> &Arc<Space> {
        self.components[0].space()
    }

    pub fn nvars(&self) -> usize {
        self.space().nvars()
    }

    pub fn dim_out(&self) -> usize {
        self.components.len()
    }

    pub fn order(&self) -> u32 {
        self.space().order()
    }

    pub fn center_in(&self) -> &[f64] {
        &self.center_in
    }

    pub fn center_out(&self) -> &[f64] {
        &self.center_out
    }

    pub fn components(&self) -> &[TruncatedPolynomial] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &TruncatedPolynomial {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<TruncatedPolynomial> {
        self.components
    }

    pub fn is_deviation(&self) -> bool {
        self.components.iter().all(|c| c.constant_part() == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// `dim_out x nvars` matrix of first-order coefficients.
    pub fn linear_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim_out(), self.nvars(), |i, j| self.components[i].linear_coeff(j))
    }

    /// Deviation image `map(δx)`.
    pub fn evaluate(&self, dx: &[f64]) -> Result<Vec<f64>, PolyError> {
        let mut vals = Vec::with_capacity(self.space().len());
        self.evaluate_with(dx, &mut vals)
    }

    fn evaluate_with(&self, dx: &[f64], vals: &mut Vec<f64>) -> Result<Vec<f64>, PolyError> {
        if dx.len() != self.nvars() {
            return Err(PolyError::LengthMismatch {
                expected: self.nvars(),
                got: dx.len(),
            });
        }
        self.space().monomial_values(dx, vals);
        Ok(self.components.iter().map(|c| c.dot(vals)).collect())
    }

    /// Absolute image `center_out + map(δx)`.
    pub fn evaluate_absolute(&self, dx: &[f64]) -> Result<Vec<f64>, PolyError> {
        let mut y = self.evaluate(dx)?;
        for (v, c) in y.iter_mut().zip(&self.center_out) {
            *v += c;
        }
        Ok(y)
    }

    /// Deviation images of many points, sharing the monomial buffer.
    pub fn evaluate_batch(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PolyError> {
        let mut vals = Vec::with_capacity(self.space().len());
        points.iter().map(|dx| self.evaluate_with(dx, &mut vals)).collect()
    }

    /// Truncated expansion of `outer ∘ inner`.
    ///
    /// `inner` must be a deviation map whose output dimension equals the
    /// number of variables of `outer`.
    pub fn compose(outer: &PolynomialMap, inner: &PolynomialMap) -> Result<PolynomialMap, PolyError> {
        if outer.nvars() != inner.dim_out() {
            return Err(PolyError::DimensionMismatch {
                expected: outer.nvars(),
                got: inner.dim_out(),
            });
        }
        if outer.order() != inner.order() {
            return Err(PolyError::ShapeMismatch {
                left: (outer.nvars(), outer.order()),
                right: (inner.nvars(), inner.order()),
            });
        }
        if !inner.is_deviation() {
            return Err(PolyError::NotDeviation);
        }
        let components = compose_components(&outer.components, &inner.components)?;
        PolynomialMap::new(inner.center_in.clone(), outer.center_out.clone(), components)
    }

    /// Inverse deviation map, rejecting linear parts with condition number above `1e12`.
    pub fn invert(&self) -> Result<PolynomialMap, PolyError> {
        self.invert_with_limit(DEFAULT_CONDITION_LIMIT)
    }

    /// Inverse deviation map `W` with `self ∘ W = W ∘ self = id` through the
    /// truncation order.
    ///
    /// Splits `self = L + N` into linear and nonlinear parts and iterates
    /// `W ← L⁻¹ (I − N ∘ W)` from `W₀ = L⁻¹`; each pass fixes one more order.
    pub fn invert_with_limit(&self, condition_limit: f64) -> Result<PolynomialMap, PolyError> {
        let n = self.nvars();
        if self.dim_out() != n {
            return Err(PolyError::NotSquare {
                rows: self.dim_out(),
                cols: n,
            });
        }
        if !self.is_deviation() {
            return Err(PolyError::NotDeviation);
        }
        let lin = self.linear_part();
        let cond = condition_number(&lin);
        if !(cond <= condition_limit) {
            return Err(PolyError::IllConditioned { condition: cond });
        }
        let lin_inv = lin.clone().try_inverse().ok_or(PolyError::IllConditioned {
            condition: f64::INFINITY,
        })?;

        let space = self.space();
        let identity: Vec<TruncatedPolynomial> = (0..n)
            .map(|i| TruncatedPolynomial::variable(space, i))
            .collect::<Result<_, _>>()?;
        let nonlinear: Vec<TruncatedPolynomial> = self
            .components
            .iter()
            .map(|c| {
                let mut p = c.clone();
                for j in 0..n {
                    p.axpy(-c.linear_coeff(j), &identity[j])?;
                }
                Ok(p)
            })
            .collect::<Result<_, PolyError>>()?;

        let mut w = apply_matrix(&lin_inv, &identity)?;
        for _ in 0..self.order() {
            let nw = compose_components(&nonlinear, &w)?;
            let rhs: Vec<TruncatedPolynomial> = identity
                .iter()
                .zip(&nw)
                .map(|(id, t)| id.try_sub(t))
                .collect::<Result<_, _>>()?;
            w = apply_matrix(&lin_inv, &rhs)?;
        }
        PolynomialMap::new(self.center_out.clone(), self.center_in.clone(), w)
    }

    /// Keeps the listed output rows.
    pub fn select_rows(&self, rows: &[usize]) -> Result<PolynomialMap, PolyError> {
        let comps = rows.iter().map(|&r| self.components[r].clone()).collect();
        let centers = rows.iter().map(|&r| self.center_out[r]).collect();
        PolynomialMap::new(self.center_in.clone(), centers, comps)
    }

    /// Stacks the outputs of two maps over the same inputs.
    pub fn stack(&self, other: &PolynomialMap) -> Result<PolynomialMap, PolyError> {
        if self.center_in != other.center_in {
            return Err(PolyError::CenterMismatch);
        }
        let mut comps = self.components.clone();
        comps.extend(other.components.iter().cloned());
        let mut centers = self.center_out.clone();
        centers.extend_from_slice(&other.center_out);
        PolynomialMap::new(self.center_in.clone(), centers, comps)
    }

    /// Largest absolute coefficient difference against `other` (same shapes).
    pub fn max_coeff_diff(&self, other: &PolynomialMap) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .flat_map(|(a, b)| a.dense().iter().zip(b.dense()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Plain-text coefficient dump: a `[component i]` header followed by
    /// `"e1 e2 ...: value"` lines in canonical order.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let fmt_vec = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "# nvars {} order {}", self.nvars(), self.order());
        let _ = writeln!(s, "# center_in {}", fmt_vec(&self.center_in));
        let _ = writeln!(s, "# center_out {}", fmt_vec(&self.center_out));
        for (i, c) in self.components.iter().enumerate() {
            let _ = writeln!(s, "[component {i}]");
            s.push_str(&c.dump());
        }
        s
    }
}

/// `Σ_m outer_m(inner)` for each component, sharing the inner monomial powers.
fn compose_components(
    outer: &[TruncatedPolynomial],
    inner: &[TruncatedPolynomial],
) -> Result<Vec<TruncatedPolynomial>, PolyError> {
    let outer_space = outer[0].space();
    let inner_space = inner[0].space();
    let len = outer_space.len();
    // highest monomial any outer component actually uses
    let used = outer
        .iter()
        .filter_map(|p| p.dense().iter().rposition(|&c| c != 0.0))
        .max()
        .unwrap_or(0);

    let mut results: Vec<TruncatedPolynomial> = outer
        .iter()
        .map(|p| TruncatedPolynomial::constant(inner_space, p.constant_part()))
        .collect();
    let mut powers: Vec<TruncatedPolynomial> = Vec::with_capacity(len);
    powers.push(TruncatedPolynomial::constant(inner_space, 1.0));
    for k in 1..=used {
        let (p, v) = outer_space.parent(k);
        let mono = powers[p].try_mul(&inner[v])?;
        for (res, o) in results.iter_mut().zip(outer) {
            let c = o.dense()[k];
            if c != 0.0 {
                res.axpy(c, &mono)?;
            }
        }
        powers.push(mono);
    }
    Ok(results)
}

fn apply_matrix(a: &DMatrix<f64>, polys: &[TruncatedPolynomial]) -> Result<Vec<TruncatedPolynomial>, PolyError> {
    let space = polys[0].space();
    (0..a.nrows())
        .map(|i| {
            let mut acc = TruncatedPolynomial::zero(space);
            for (j, p) in polys.iter().enumerate() {
                let c = a[(i, j)];
                if c != 0.0 {
                    acc.axpy(c, p)?;
                }
            }
            Ok(acc)
        })
        .collect()
}

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

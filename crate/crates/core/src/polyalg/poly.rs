use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use super::series;
use super::space::{MultiIndex, Space};
use super::PolyError;

/// Elementary functions available on polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intrinsic {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Atan,
    Asin,
    Reciprocal,
}

/// Truncated multivariate Taylor polynomial.
///
/// Coefficients live in the canonical graded-lex order of the owning
/// [`Space`]; every operation truncates at the space order.
#[derive(Clone)]
pub struct TruncatedPolynomial {
    space: Arc<Space>,
    coeffs: Vec<f64>,
}

/// Seeds the deviation variable `δx_index`.
pub fn make_variable(index: usize, nvars: usize, order: u32) -> Result<TruncatedPolynomial, PolyError> {
    let space = Space::new(nvars, order)?;
    TruncatedPolynomial::variable(&space, index)
}

impl TruncatedPolynomial {
    pub fn zero(space: &Arc<Space>) -> Self {
        TruncatedPolynomial {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.len()],
        }
    }

    pub fn constant(space: &Arc<Space>, c: f64) -> Self {
        let mut p = Self::zero(space);
        p.coeffs[0] = c;
        p
    }

    pub fn variable(space: &Arc<Space>, index: usize) -> Result<Self, PolyError> {
        if index >= space.nvars() {
            return Err(PolyError::VariableOutOfRange {
                index,
                nvars: space.nvars(),
            });
        }
        let mut p = Self::zero(space);
        p.coeffs[1 + index] = 1.0;
        Ok(p)
    }

    /// Builds a polynomial from `(exponents, coefficient)` terms; repeated
    /// exponents accumulate.
    pub fn from_terms(space: &Arc<Space>, terms: &[(&[u8], f64)]) -> Result<Self, PolyError> {
        let mut p = Self::zero(space);
        for (exps, c) in terms {
            let idx = Self::locate(space, exps)?;
            p.coeffs[idx] += c;
        }
        Ok(p)
    }

    /// Dense coefficient vector in canonical order.
    pub fn from_dense(space: &Arc<Space>, coeffs: Vec<f64>) -> Result<Self, PolyError> {
        if coeffs.len() != space.len() {
            return Err(PolyError::LengthMismatch {
                expected: space.len(),
                got: coeffs.len(),
            });
        }
        Ok(TruncatedPolynomial {
            space: Arc::clone(space),
            coeffs,
        })
    }

    fn locate(space: &Space, exps: &[u8]) -> Result<usize, PolyError> {
        if exps.len() != space.nvars() {
            return Err(PolyError::LengthMismatch {
                expected: space.nvars(),
                got: exps.len(),
            });
        }
        space.index_of(exps).ok_or(PolyError::DegreeTooHigh {
            degree: exps.iter().map(|&e| e as u32).sum(),
            order: space.order(),
        })
    }

    pub fn space(&self) -> &Arc<Space> {
        &self.space
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars()
    }

    pub fn order(&self) -> u32 {
        self.space.order()
    }

    pub fn dense(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, exps: &[u8]) -> f64 {
        self.space.index_of(exps).map_or(0.0, |k| self.coeffs[k])
    }

    pub fn coeff_at(&self, index: &MultiIndex) -> f64 {
        self.coeff(index.exponents())
    }

    pub fn constant_part(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of `δx_var` (first-order partial derivative at the center).
    pub fn linear_coeff(&self, var: usize) -> f64 {
        self.coeffs[1 + var]
    }

    /// Nonzero terms in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(move |(k, &c)| (MultiIndex::from(self.space.exponents(k)), c))
    }

    /// Highest degree carrying a nonzero coefficient (0 for constants and zero).
    pub fn degree(&self) -> u32 {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(0, |k| self.space.degree(k))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_shape(&self, other: &Self) -> Result<(), PolyError> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space.same_shape(&other.space) {
            Ok(())
        } else {
            Err(PolyError::ShapeMismatch {
                left: (self.nvars(), self.order()),
                right: (other.nvars(), other.order()),
            })
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(TruncatedPolynomial {
            space: Arc::clone(&self.space),
            coeffs,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(TruncatedPolynomial {
            space: Arc::clone(&self.space),
            coeffs,
        })
    }

    /// Truncated Cauchy product.
    pub fn try_mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_shape(other)?;
        let mut out = vec![0.0; self.coeffs.len()];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for &(j, k) in self.space.mul_row(i) {
                out[k as usize] += a * other.coeffs[j as usize];
            }
        }
        Ok(TruncatedPolynomial {
            space: Arc::clone(&self.space),
            coeffs: out,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        TruncatedPolynomial {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.coeffs[0] += s;
        p
    }

    /// `self += s * other`, shapes must agree.
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<(), PolyError> {
        self.check_shape(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
        Ok(())
    }

    /// Non-constant part `p - p(0)`.
    pub fn nilpotent_part(&self) -> Self {
        let mut p = self.clone();
        p.coeffs[0] = 0.0;
        p
    }

    /// Keeps only the terms of degree `<= order`, re-expressed on `target`.
    pub fn truncate_to(&self, target: &Arc<Space>) -> Result<Self, PolyError> {
        if target.nvars() != self.nvars() || target.order() > self.order() {
            return Err(PolyError::ShapeMismatch {
                left: (self.nvars(), self.order()),
                right: (target.nvars(), target.order()),
            });
        }
        let n = target.len();
        Ok(TruncatedPolynomial {
            space: Arc::clone(target),
            coeffs: self.coeffs[..n].to_vec(),
        })
    }

    /// Drops every term of degree `> degree` in place of the same space.
    pub fn drop_above(&self, degree: u32) -> Self {
        let keep = self.space.len_upto(degree);
        let mut p = self.clone();
        p.coeffs[keep..].iter_mut().for_each(|c| *c = 0.0);
        p
    }

    pub fn evaluate(&self, dx: &[f64]) -> Result<f64, PolyError> {
        if dx.len() != self.nvars() {
            return Err(PolyError::LengthMismatch {
                expected: self.nvars(),
                got: dx.len(),
            });
        }
        let mut vals = Vec::new();
        self.space.monomial_values(dx, &mut vals);
        Ok(self.dot(&vals))
    }

    /// Evaluates at every row of `points`.
    pub fn evaluate_batch(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, PolyError> {
        let mut vals = Vec::with_capacity(self.space.len());
        points
            .iter()
            .map(|dx| {
                if dx.len() != self.nvars() {
                    return Err(PolyError::LengthMismatch {
                        expected: self.nvars(),
                        got: dx.len(),
                    });
                }
                self.space.monomial_values(dx, &mut vals);
                Ok(self.dot(&vals))
            })
            .collect()
    }

    pub(crate) fn dot(&self, monomial_values: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(monomial_values)
            .map(|(c, v)| c * v)
            .sum()
    }

    /// `sum_k table[k] * (self - c)^k` by Horner's rule.
    fn compose_series(&self, table: &[f64]) -> Self {
        let nil = self.nilpotent_part();
        let mut acc = TruncatedPolynomial::constant(&self.space, *table.last().unwrap_or(&0.0));
        for &a in table.iter().rev().skip(1) {
            acc = acc.try_mul(&nil).expect("same space");
            acc.coeffs[0] += a;
        }
        acc
    }

    /// Applies an elementary function by expanding it about the constant part.
    pub fn apply(&self, f: Intrinsic) -> Result<Self, PolyError> {
        let c = self.constant_part();
        let k = self.order() as usize;
        let table = match f {
            Intrinsic::Sin => series::sin(c, k),
            Intrinsic::Cos => series::cos(c, k),
            Intrinsic::Exp => series::exp(c, k),
            Intrinsic::Log => series::ln(c, k)?,
            Intrinsic::Sqrt => series::sqrt(c, k)?,
            Intrinsic::Atan => series::atan(c, k),
            Intrinsic::Asin => series::asin(c, k)?,
            Intrinsic::Reciprocal => series::recip(c, k)?,
        };
        Ok(self.compose_series(&table))
    }

    pub fn sin(&self) -> Self {
        self.apply(Intrinsic::Sin).expect("sin is entire")
    }

    pub fn cos(&self) -> Self {
        self.apply(Intrinsic::Cos).expect("cos is entire")
    }

    pub fn exp(&self) -> Self {
        self.apply(Intrinsic::Exp).expect("exp is entire")
    }

    pub fn ln(&self) -> Result<Self, PolyError> {
        self.apply(Intrinsic::Log)
    }

    pub fn sqrt(&self) -> Result<Self, PolyError> {
        self.apply(Intrinsic::Sqrt)
    }

    pub fn atan(&self) -> Self {
        self.apply(Intrinsic::Atan).expect("atan is analytic on the reals")
    }

    pub fn asin(&self) -> Result<Self, PolyError> {
        self.apply(Intrinsic::Asin)
    }

    pub fn recip(&self) -> Result<Self, PolyError> {
        self.apply(Intrinsic::Reciprocal)
    }

    /// Real power about a positive constant part (integer powers also accept
    /// negative constants).
    pub fn powf(&self, alpha: f64) -> Result<Self, PolyError> {
        let table = series::pow(self.constant_part(), alpha, self.order() as usize)?;
        Ok(self.compose_series(&table))
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut acc = TruncatedPolynomial::constant(&self.space, 1.0);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&base).expect("same space");
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base).expect("same space");
            }
        }
        acc
    }

    pub fn try_div(&self, other: &Self) -> Result<Self, PolyError> {
        self.try_mul(&other.recip()?)
    }

    /// Two-argument arctangent `atan2(self, x)`.
    ///
    /// Uses `atan2(y, x) = θ₀ + atan((x₀ y − y₀ x) / (x₀ x + y₀ y))`, whose
    /// quotient has a zero constant part.
    pub fn atan2(&self, x: &Self) -> Result<Self, PolyError> {
        self.check_shape(x)?;
        let (y0, x0) = (self.constant_part(), x.constant_part());
        if y0 == 0.0 && x0 == 0.0 {
            return Err(PolyError::Domain {
                function: "atan2",
                at: 0.0,
            });
        }
        let num = x.scale(-y0).try_add(&self.scale(x0))?;
        let den = x.scale(x0).try_add(&self.scale(y0))?;
        let mut q = num.try_div(&den)?;
        q.coeffs[0] = 0.0;
        let mut out = q.atan();
        out.coeffs[0] = y0.atan2(x0);
        Ok(out)
    }

    /// One line per nonzero coefficient, `"e1 e2 ...: value"`, 17 significant digits.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (idx, c) in self.terms() {
            let _ = writeln!(s, "{idx}: {c:.16e}");
        }
        s
    }
}

impl fmt::Debug for TruncatedPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TruncatedPolynomial(nvars={}, order={}) {{", self.nvars(), self.order())?;
        for (i, (idx, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, " [{idx}]: {c}")?;
        }
        write!(f, " }}")
    }
}

impl PartialEq for TruncatedPolynomial {
    fn eq(&self, other: &Self) -> bool {
        self.space.same_shape(&other.space) && self.coeffs == other.coeffs
    }
}

// Operator forms panic on shape mismatch; the `try_*` methods report it.

impl Add for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn add(self, rhs: Self) -> Self {
        self.try_add(&rhs).expect("polynomial shape mismatch")
    }
}

impl Add<&TruncatedPolynomial> for &TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn add(self, rhs: &TruncatedPolynomial) -> TruncatedPolynomial {
        self.try_add(rhs).expect("polynomial shape mismatch")
    }
}

impl AddAssign<&TruncatedPolynomial> for TruncatedPolynomial {
    fn add_assign(&mut self, rhs: &TruncatedPolynomial) {
        self.axpy(1.0, rhs).expect("polynomial shape mismatch");
    }
}

impl Sub for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn sub(self, rhs: Self) -> Self {
        self.try_sub(&rhs).expect("polynomial shape mismatch")
    }
}

impl Sub<&TruncatedPolynomial> for &TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn sub(self, rhs: &TruncatedPolynomial) -> TruncatedPolynomial {
        self.try_sub(rhs).expect("polynomial shape mismatch")
    }
}

impl Mul for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn mul(self, rhs: Self) -> Self {
        self.try_mul(&rhs).expect("polynomial shape mismatch")
    }
}

impl Mul<&TruncatedPolynomial> for &TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn mul(self, rhs: &TruncatedPolynomial) -> TruncatedPolynomial {
        self.try_mul(rhs).expect("polynomial shape mismatch")
    }
}

impl Neg for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Add<f64> for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn add(mut self, rhs: f64) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn sub(mut self, rhs: f64) -> Self {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for TruncatedPolynomial {
    type Output = TruncatedPolynomial;
    fn mul(self, rhs: f64) -> Self {
        self.scale(rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize, k: u32) -> Arc<Space> {
        Space::new(n, k).unwrap()
    }

    fn var(s: &Arc<Space>, i: usize) -> TruncatedPolynomial {
        TruncatedPolynomial::variable(s, i).unwrap()
    }

    #[test]
    fn make_variable_examples() {
        let x = make_variable(0, 2, 3).unwrap();
        assert_eq!(x.coeff(&[1, 0]), 1.0);
        assert_eq!(x.terms().count(), 1);

        let y = make_variable(1, 2, 3).unwrap();
        assert_eq!(y.evaluate(&[5.0, 7.0]).unwrap(), 7.0);

        let z = make_variable(0, 1, 2).unwrap();
        let sq = &z * &z;
        assert_eq!(sq.coeff(&[2]), 1.0);
        assert_eq!(sq.terms().count(), 1);
    }

    #[test]
    fn make_variable_errors() {
        assert!(matches!(
            make_variable(2, 2, 3),
            Err(PolyError::VariableOutOfRange { index: 2, nvars: 2 })
        ));
        assert!(matches!(make_variable(0, 2, 0), Err(PolyError::InvalidOrder(0))));
    }

    #[test]
    fn linear_arithmetic() {
        let s = space(1, 3);
        let x = var(&s, 0);
        let a = x.clone() + 1.0;
        let b = (-x.clone()) + 2.0;
        let sum = a + b;
        assert_eq!(sum.constant_part(), 3.0);
        assert_eq!(sum.degree(), 0);

        assert!(x.scale(0.0).terms().next().is_none());

        let x2 = &x * &x;
        let d = (&x + &x2) - x.clone();
        assert_eq!(d, x2);
    }

    #[test]
    fn product_truncates() {
        let s2 = space(1, 2);
        let p = var(&s2, 0) + 1.0;
        let sq = &p * &p;
        assert_eq!(sq.dense(), &[1.0, 2.0, 1.0]);

        let s1 = space(1, 1);
        let p = var(&s1, 0) + 1.0;
        let sq = &p * &p;
        assert_eq!(sq.dense(), &[1.0, 2.0]);

        let s = space(2, 2);
        let xy = var(&s, 0) + var(&s, 1);
        let sq = &xy * &xy;
        assert_eq!(sq.coeff(&[2, 0]), 1.0);
        assert_eq!(sq.coeff(&[1, 1]), 2.0);
        assert_eq!(sq.coeff(&[0, 2]), 1.0);
        assert_eq!(sq.terms().count(), 3);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = make_variable(0, 2, 3).unwrap();
        let b = make_variable(0, 2, 2).unwrap();
        assert!(matches!(a.try_mul(&b), Err(PolyError::ShapeMismatch { .. })));
        assert!(a.try_add(&b).is_err());
    }

    #[test]
    fn intrinsic_examples() {
        let s = space(1, 3);
        let x = var(&s, 0);
        let e = x.exp();
        let expect = [1.0, 1.0, 0.5, 1.0 / 6.0];
        for (c, want) in e.dense().iter().zip(expect) {
            assert!((c - want).abs() < 1e-15);
        }

        let s2 = space(1, 2);
        let r = (var(&s2, 0) + 1.0).sqrt().unwrap();
        assert_eq!(r.dense(), &[1.0, 0.5, -0.125]);

        assert!(matches!(
            var(&s2, 0).sqrt(),
            Err(PolyError::Domain { function: "sqrt", .. })
        ));
    }

    #[test]
    fn evaluation_examples() {
        let s = space(1, 2);
        let x = var(&s, 0);
        let p = (&x * &x) + x.scale(2.0) + 1.0;
        assert_eq!(p.evaluate(&[3.0]).unwrap(), 16.0);
        assert_eq!(p.evaluate(&[0.0]).unwrap(), p.constant_part());
        assert!(p.evaluate(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn batch_evaluation_matches_pointwise() {
        let s = space(3, 3);
        let x = var(&s, 0);
        let y = var(&s, 1);
        let z = var(&s, 2);
        let p = (&(&x * &y) * &z).scale(2.5) + (&x * &x).scale(-1.0) + z.scale(0.3) + 0.7;
        let pts: Vec<Vec<f64>> = (0..10_000)
            .map(|i| {
                let t = i as f64 * 1e-4;
                vec![t.sin(), (3.0 * t).cos(), t - 0.5]
            })
            .collect();
        let batch = p.evaluate_batch(&pts).unwrap();
        for (pt, b) in pts.iter().zip(&batch) {
            assert_eq!(*b, p.evaluate(pt).unwrap());
        }
    }

    #[test]
    fn atan2_matches_analytic_gradient() {
        let s = space(2, 3);
        let x = var(&s, 0) + 0.3;
        let y = var(&s, 1) + 0.4;
        let a = y.atan2(&x).unwrap();
        assert!((a.constant_part() - 0.4f64.atan2(0.3)).abs() < 1e-15);
        // d/dx atan2(y,x) = -y/r², d/dy = x/r²
        assert!((a.linear_coeff(0) + 0.4 / 0.25).abs() < 1e-12);
        assert!((a.linear_coeff(1) - 0.3 / 0.25).abs() < 1e-12);
        assert!(TruncatedPolynomial::constant(&s, 0.0)
            .atan2(&TruncatedPolynomial::constant(&s, 0.0))
            .is_err());
    }

    #[test]
    fn atan2_second_order_matches_finite_differences() {
        let s = space(2, 2);
        let (x0, y0) = (-0.8, 0.25);
        let a = (var(&s, 1) + y0).atan2(&(var(&s, 0) + x0)).unwrap();
        let f = |dx: f64, dy: f64| (y0 + dy).atan2(x0 + dx);
        let h = 1e-4;
        let fxx = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
        let fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        assert!((a.coeff(&[2, 0]) - fxx / 2.0).abs() < 1e-5);
        assert!((a.coeff(&[1, 1]) - fxy).abs() < 1e-5);
    }

    #[test]
    fn dump_format() {
        let s = space(2, 2);
        let p = var(&s, 0).scale(0.1) + 3.0;
        assert_eq!(p.dump(), "0 0: 3.0000000000000000e0\n1 0: 1.0000000000000001e-1\n");
    }

    #[test]
    fn powi_and_division() {
        let s = space(2, 4);
        let p = var(&s, 0) + var(&s, 1).scale(0.5) + 2.0;
        let cube = p.powi(3);
        assert_eq!(cube, &(&p * &p) * &p);
        let one = cube.try_div(&cube).unwrap();
        assert!((one.constant_part() - 1.0).abs() < 1e-15);
        assert!(one.nilpotent_part().max_abs_coeff() < 1e-14);
    }
}

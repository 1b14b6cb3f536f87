//! Arithmetic shared by plain floats and Taylor polynomials, so that
//! dynamics and measurement models are written once and run either on a
//! single point or as jet transport.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use super::{PolyError, TruncatedPolynomial};

pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Constant of the same kind (same polynomial space).
    fn lift(&self, c: f64) -> Self;
    /// Value at the expansion point.
    fn value(&self) -> f64;
    fn sqrt(&self) -> Result<Self, PolyError>;
    fn recip(&self) -> Result<Self, PolyError>;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Result<Self, PolyError>;
    fn asin(&self) -> Result<Self, PolyError>;
    /// `atan2(self, x)`.
    fn atan2(&self, x: &Self) -> Result<Self, PolyError>;
    fn powi(&self, n: u32) -> Self;
    /// False once any coefficient has overflowed or turned NaN.
    fn is_finite(&self) -> bool;

    fn div(&self, other: &Self) -> Result<Self, PolyError> {
        Ok(self.clone() * other.recip()?)
    }
}

fn domain(function: &'static str, at: f64) -> PolyError {
    PolyError::Domain { function, at }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }

    fn value(&self) -> f64 {
        *self
    }

    fn sqrt(&self) -> Result<Self, PolyError> {
        if *self < 0.0 {
            return Err(domain("sqrt", *self));
        }
        Ok(f64::sqrt(*self))
    }

    fn recip(&self) -> Result<Self, PolyError> {
        if *self == 0.0 {
            return Err(domain("reciprocal", 0.0));
        }
        Ok(1.0 / *self)
    }

    fn sin(&self) -> Self {
        f64::sin(*self)
    }

    fn cos(&self) -> Self {
        f64::cos(*self)
    }

    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    fn ln(&self) -> Result<Self, PolyError> {
        if *self <= 0.0 {
            return Err(domain("log", *self));
        }
        Ok(f64::ln(*self))
    }

    fn asin(&self) -> Result<Self, PolyError> {
        if self.abs() > 1.0 {
            return Err(domain("asin", *self));
        }
        Ok(f64::asin(*self))
    }

    fn atan2(&self, x: &Self) -> Result<Self, PolyError> {
        Ok(f64::atan2(*self, *x))
    }

    fn powi(&self, n: u32) -> Self {
        f64::powi(*self, n as i32)
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn div(&self, other: &Self) -> Result<Self, PolyError> {
        if *other == 0.0 {
            return Err(domain("reciprocal", 0.0));
        }
        Ok(*self / *other)
    }
}

impl Scalar for TruncatedPolynomial {
    fn lift(&self, c: f64) -> Self {
        TruncatedPolynomial::constant(self.space(), c)
    }

    fn value(&self) -> f64 {
        self.constant_part()
    }

    fn sqrt(&self) -> Result<Self, PolyError> {
        TruncatedPolynomial::sqrt(self)
    }

    fn recip(&self) -> Result<Self, PolyError> {
        TruncatedPolynomial::recip(self)
    }

    fn sin(&self) -> Self {
        TruncatedPolynomial::sin(self)
    }

    fn cos(&self) -> Self {
        TruncatedPolynomial::cos(self)
    }

    fn exp(&self) -> Self {
        TruncatedPolynomial::exp(self)
    }

    fn ln(&self) -> Result<Self, PolyError> {
        TruncatedPolynomial::ln(self)
    }

    fn asin(&self) -> Result<Self, PolyError> {
        TruncatedPolynomial::asin(self)
    }

    fn atan2(&self, x: &Self) -> Result<Self, PolyError> {
        TruncatedPolynomial::atan2(self, x)
    }

    fn powi(&self, n: u32) -> Self {
        TruncatedPolynomial::powi(self, n)
    }

    fn is_finite(&self) -> bool {
        TruncatedPolynomial::is_finite(self)
    }

    fn div(&self, other: &Self) -> Result<Self, PolyError> {
        self.try_div(other)
    }
}

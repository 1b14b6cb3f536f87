//! Truncated multivariate Taylor arithmetic ("differential algebra").
//!
//! Polynomials are immutable values over a shared [`Space`]. Besides the
//! ring operations the module provides elementary functions, composition of
//! polynomial maps and inversion of square deviation maps.

mod map;
mod poly;
mod scalar;
mod series;
mod space;

pub use map::{condition_number, PolynomialMap, DEFAULT_CONDITION_LIMIT};
pub use poly::{make_variable, Intrinsic, TruncatedPolynomial};
pub use scalar::Scalar;
pub use space::{MultiIndex, Space};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("truncation order must be between 1 and 40, got {0}")]
    InvalidOrder(u32),
    #[error("a polynomial needs at least one variable")]
    NoVariables,
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("shape mismatch: (nvars, order) {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, u32), right: (usize, u32) },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("monomial of degree {degree} exceeds truncation order {order}")]
    DegreeTooHigh { degree: u32, order: u32 },
    #[error("{function} cannot be expanded about {at}")]
    Domain { function: &'static str, at: f64 },
    #[error("inner map has a nonzero constant part")]
    NotDeviation,
    #[error("map is not square ({rows} outputs, {cols} variables)")]
    NotSquare { rows: usize, cols: usize },
    #[error("linear part is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("maps have different input centers")]
    CenterMismatch,
    #[error("a map needs at least one component")]
    EmptyMap,
}

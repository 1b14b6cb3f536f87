//! Univariate Taylor tables `a_k = f^(k)(c) / k!` used to build intrinsics.

use super::PolyError;

/// `a^alpha` for a series with nonzero leading term, via `a h' = alpha a' h`.
fn powf(a: &[f64], alpha: f64) -> Vec<f64> {
    let n = a.len();
    let mut h = vec![0.0; n];
    h[0] = a[0].powf(alpha);
    for k in 1..n {
        let mut acc = 0.0;
        for j in 1..=k {
            acc += (alpha * j as f64 - (k - j) as f64) * a[j] * h[k - j];
        }
        h[k] = acc / (k as f64 * a[0]);
    }
    h
}

/// Antiderivative with constant `c0`; one term longer than `a`.
fn integrate(a: &[f64], c0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + 1);
    out.push(c0);
    for (k, &ak) in a.iter().enumerate() {
        out.push(ak / (k + 1) as f64);
    }
    out
}

/// `[a0, a1, a2]` padded or cut to `len` terms.
fn quadratic(a0: f64, a1: f64, a2: f64, len: usize) -> Vec<f64> {
    let mut s = vec![0.0; len];
    for (slot, v) in s.iter_mut().zip([a0, a1, a2]) {
        *slot = v;
    }
    s
}

pub(crate) fn exp(c: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    let e = c.exp();
    let mut fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact *= k as f64;
        }
        out.push(e / fact);
    }
    out
}

pub(crate) fn ln(c: f64, order: usize) -> Result<Vec<f64>, PolyError> {
    if !(c > 0.0) {
        return Err(PolyError::Domain { function: "log", at: c });
    }
    let mut out = vec![c.ln()];
    for k in 1..=order {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out.push(sign / (k as f64 * c.powi(k as i32)));
    }
    Ok(out)
}

pub(crate) fn pow(c: f64, alpha: f64, order: usize) -> Result<Vec<f64>, PolyError> {
    if c == 0.0 || (c < 0.0 && alpha.fract() != 0.0) {
        return Err(PolyError::Domain { function: "pow", at: c });
    }
    if c > 0.0 {
        return Ok(powf(&quadratic(c, 1.0, 0.0, order + 1), alpha));
    }
    // negative base, integer exponent: (-1)^alpha (|c| - t)^alpha
    let mut h = powf(&quadratic(-c, -1.0, 0.0, order + 1), alpha);
    if (alpha as i64) % 2 != 0 {
        h.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(h)
}

pub(crate) fn sqrt(c: f64, order: usize) -> Result<Vec<f64>, PolyError> {
    if !(c > 0.0) {
        return Err(PolyError::Domain { function: "sqrt", at: c });
    }
    pow(c, 0.5, order)
}

pub(crate) fn recip(c: f64, order: usize) -> Result<Vec<f64>, PolyError> {
    if c == 0.0 || !c.is_finite() {
        return Err(PolyError::Domain { function: "reciprocal", at: c });
    }
    let mut out = Vec::with_capacity(order + 1);
    let mut term = 1.0 / c;
    for _ in 0..=order {
        out.push(term);
        term *= -1.0 / c;
    }
    Ok(out)
}

pub(crate) fn sin(c: f64, order: usize) -> Vec<f64> {
    let (s, co) = c.sin_cos();
    let cycle = [s, co, -s, -co];
    let mut fact = 1.0;
    (0..=order)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            cycle[k % 4] / fact
        })
        .collect()
}

pub(crate) fn cos(c: f64, order: usize) -> Vec<f64> {
    let (s, co) = c.sin_cos();
    let cycle = [co, -s, -co, s];
    let mut fact = 1.0;
    (0..=order)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            cycle[k % 4] / fact
        })
        .collect()
}

/// `atan(c + t)` from the integral of `1 / (1 + (c + t)^2)`.
pub(crate) fn atan(c: f64, order: usize) -> Vec<f64> {
    if order == 0 {
        return vec![c.atan()];
    }
    let dq = powf(&quadratic(1.0 + c * c, 2.0 * c, 1.0, order), -1.0);
    integrate(&dq, c.atan())
}

/// `asin(c + t)` from the integral of `(1 - (c + t)^2)^(-1/2)`.
pub(crate) fn asin(c: f64, order: usize) -> Result<Vec<f64>, PolyError> {
    if !(c.abs() < 1.0) {
        return Err(PolyError::Domain { function: "asin", at: c });
    }
    if order == 0 {
        return Ok(vec![c.asin()]);
    }
    let dg = powf(&quadratic(1.0 - c * c, -2.0 * c, -1.0, order), -0.5);
    Ok(integrate(&dg, c.asin()))
}

//! Monomial bases for truncated multivariate polynomials.
//!
//! A [`Space`] fixes the number of variables and the truncation order and
//! enumerates every monomial of total degree `<= order` in graded
//! lexicographic order. Polynomials built on the same space share one
//! `Arc<Space>` so the multiplication table is computed once.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::PolyError;

/// Exponent vector of a monomial.
///
/// Ordering is graded lexicographic: lower total degree first, then larger
/// leading exponents first (`1, x, y, x², xy, y², ...`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u8>);

impl MultiIndex {
    pub fn new(exponents: Vec<u8>) -> Self {
        MultiIndex(exponents)
    }

    /// Unit index `e_var` in `nvars` variables.
    pub fn unit(var: usize, nvars: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        MultiIndex(e)
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex(vec![0; nvars])
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }
}

impl From<&[u8]> for MultiIndex {
    fn from(e: &[u8]) -> Self {
        MultiIndex(e.to_vec())
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

/// Monomial basis for `nvars` variables truncated at `order`.
pub struct Space {
    nvars: usize,
    order: u32,
    /// Flattened exponents, `nvars` entries per monomial.
    exponents: Vec<u8>,
    degrees: Vec<u32>,
    lookup: HashMap<Vec<u8>, usize>,
    /// For monomial `k > 0`: `(p, v)` such that `mono[k] = mono[p] * x_v`.
    parent: Vec<(usize, usize)>,
    /// For monomial `i`: all `(j, k)` with `mono[i] * mono[j] = mono[k]` and
    /// `deg(k) <= order`.
    mul_table: Vec<Vec<(u32, u32)>>,
    /// Index of the first monomial of each degree, plus a trailing sentinel.
    degree_starts: Vec<usize>,
}

impl fmt::Debug for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Space")
            .field("nvars", &self.nvars)
            .field("order", &self.order)
            .field("len", &self.len())
            .finish()
    }
}

fn push_compositions(rest: usize, degree: u32, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if rest == 1 {
        prefix.push(degree as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=degree).rev() {
        prefix.push(e as u8);
        push_compositions(rest - 1, degree - e, prefix, out);
        prefix.pop();
    }
}

impl Space {
    pub fn new(nvars: usize, order: u32) -> Result<Arc<Space>, PolyError> {
        if nvars == 0 {
            return Err(PolyError::NoVariables);
        }
        if order < 1 {
            return Err(PolyError::InvalidOrder(order));
        }
        if order > 40 {
            return Err(PolyError::InvalidOrder(order));
        }

        let mut monomials: Vec<Vec<u8>> = Vec::new();
        let mut degree_starts = Vec::with_capacity(order as usize + 2);
        for d in 0..=order {
            degree_starts.push(monomials.len());
            push_compositions(nvars, d, &mut Vec::with_capacity(nvars), &mut monomials);
        }
        degree_starts.push(monomials.len());

        let lookup: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let degrees: Vec<u32> = monomials
            .iter()
            .map(|m| m.iter().map(|&e| e as u32).sum())
            .collect();

        let mut parent = Vec::with_capacity(monomials.len());
        parent.push((0, 0));
        for m in monomials.iter().skip(1) {
            // strip one power from the last nonzero exponent
            let v = m.iter().rposition(|&e| e > 0).expect("nonconstant monomial");
            let mut p = m.clone();
            p[v] -= 1;
            parent.push((lookup[&p], v));
        }

        let mut mul_table = Vec::with_capacity(monomials.len());
        let mut scratch = vec![0u8; nvars];
        for (i, mi) in monomials.iter().enumerate() {
            let room = order - degrees[i];
            let end = degree_starts[room as usize + 1];
            let mut row = Vec::with_capacity(end);
            for (j, mj) in monomials[..end].iter().enumerate() {
                for v in 0..nvars {
                    scratch[v] = mi[v] + mj[v];
                }
                row.push((j as u32, lookup[&scratch] as u32));
            }
            mul_table.push(row);
        }

        Ok(Arc::new(Space {
            nvars,
            order,
            exponents: monomials.concat(),
            degrees,
            lookup,
            parent,
            mul_table,
            degree_starts,
        }))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Number of monomials, `C(nvars + order, order)`.
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn exponents(&self, k: usize) -> &[u8] {
        &self.exponents[k * self.nvars..(k + 1) * self.nvars]
    }

    pub fn degree(&self, k: usize) -> u32 {
        self.degrees[k]
    }

    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        if exponents.len() != self.nvars {
            return None;
        }
        self.lookup.get(exponents).copied()
    }

    /// Range of monomial indices with total degree exactly `d`.
    pub fn degree_range(&self, d: u32) -> std::ops::Range<usize> {
        if d > self.order {
            return self.len()..self.len();
        }
        self.degree_starts[d as usize]..self.degree_starts[d as usize + 1]
    }

    /// Number of monomials with degree `<= d`.
    pub fn len_upto(&self, d: u32) -> usize {
        self.degree_starts[(d.min(self.order) + 1) as usize]
    }

    pub(crate) fn parent(&self, k: usize) -> (usize, usize) {
        self.parent[k]
    }

    pub(crate) fn mul_row(&self, i: usize) -> &[(u32, u32)] {
        &self.mul_table[i]
    }

    pub fn same_shape(&self, other: &Space) -> bool {
        self.nvars == other.nvars && self.order == other.order
    }

    /// Values of every monomial at the point `dx`.
    pub fn monomial_values(&self, dx: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(self.len());
        out.push(1.0);
        for k in 1..self.len() {
            let (p, v) = self.parent[k];
            let val = out[p] * dx[v];
            out.push(val);
        }
    }
}

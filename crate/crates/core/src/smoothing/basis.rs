use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Polynomial basis over the regression inputs.
///
/// Monomials are enumerated constant first, then by increasing total degree,
/// and within one total degree by descending exponent tuple, so over
/// `(x, y)` at degree 2 the order is `1, x, y, x², xy, y²`. Without cross
/// terms only pure powers remain: `1, x, y, x², y²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: u32,
    #[serde(default = "default_cross_terms")]
    pub cross_terms: bool,
}

fn default_cross_terms() -> bool {
    true
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self::quadratic()
    }
}

impl BasisSpec {
    pub fn new(degree: u32, cross_terms: bool) -> Self {
        Self {
            degree,
            cross_terms,
        }
    }

    pub fn quadratic() -> Self {
        Self::new(2, true)
    }

    /// Exponent tuples for `dims` inputs in basis order.
    pub fn exponents(&self, dims: usize) -> Vec<Vec<u32>> {
        let mut out = vec![vec![0; dims]];
        for total in 1..=self.degree {
            let mut level = Vec::new();
            let mut current = vec![0; dims];
            compositions(total, 0, &mut current, &mut level);
            if !self.cross_terms {
                level.retain(|e| e.iter().filter(|&&k| k > 0).count() <= 1);
            }
            out.extend(level);
        }
        out
    }

    pub fn size(&self, dims: usize) -> usize {
        self.exponents(dims).len()
    }
}

/// All exponent tuples with the given total in descending lexicographic order.
fn compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos == current.len() {
        if remaining == 0 {
            out.push(current.clone());
        }
        return;
    }
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// Evaluates every monomial of `exponents` at `z` into `out`.
pub(crate) fn expand_into<T: Scalar>(exponents: &[Vec<u32>], z: &[T], out: &mut [T]) {
    for (o, e) in out.iter_mut().zip(exponents) {
        *o = e
            .iter()
            .zip(z)
            .fold(T::one(), |acc, (&k, &v)| if k == 0 { acc } else { acc * v.powi(k as i32) });
    }
}

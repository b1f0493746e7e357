use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::basis::{expand_into, BasisSpec};
use super::SampleSet;
use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, solve_normal_equations, ColMatrix, Solver};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Use the sample time as the first regression input.
    pub include_time: bool,
    /// Regress on zero-mean, unit-variance inputs. Coefficients are still
    /// reported for raw inputs.
    pub standardize: bool,
    pub solver: Solver,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            include_time: false,
            standardize: false,
            solver: Solver::Svd,
        }
    }
}

/// Fitted `Ψ(X) = Σ c_k b_k(X)` with raw-coordinate coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct PolynomialFit<T> {
    pub coefficients: Vec<T>,
    pub rank: usize,
    pub n_samples: usize,
    /// Largest over smallest retained singular value; absent at rank 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<T>,
    pub residual_norm: T,
    /// `‖r‖² / (n − rank)`; absent when there are no degrees of freedom left.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_variance: Option<T>,
    pub solver: Solver,
    pub include_time: bool,
    /// Per input: mean and scale used for the regression, when standardized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<(Vec<T>, Vec<T>)>,
    /// `(BᵀB)⁺` in regression coordinates, row-major.
    pub gram_pinv: Vec<T>,
    /// Per input: sample minimum and maximum.
    pub bounds: Vec<(T, T)>,
    #[serde(skip)]
    exponents: Vec<Vec<u32>>,
}

impl<T: Scalar> PolynomialFit<T> {
    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Restores derived state after deserialization.
    pub(crate) fn attach_basis(&mut self, basis: &BasisSpec) -> Result<()> {
        self.exponents = basis.exponents(self.bounds.len());
        if self.exponents.len() != self.coefficients.len() {
            return Err(Error::IncompatibleArtifact(format!(
                "{} coefficients for a basis of size {}",
                self.coefficients.len(),
                self.exponents.len()
            )));
        }
        let n = self.exponents.len();
        if self.gram_pinv.len() != n * n {
            return Err(Error::IncompatibleArtifact("covariance has wrong size".into()));
        }
        Ok(())
    }

    pub fn predict(&self, z: &[T]) -> T {
        let mut m = vec![T::zero(); self.exponents.len()];
        expand_into(&self.exponents, z, &mut m);
        m.iter()
            .zip(&self.coefficients)
            .fold(T::zero(), |acc, (&b, &c)| acc + b * c)
    }

    /// Standard error of the fitted mean at `z`, from the residual variance.
    pub fn standard_error(&self, z: &[T]) -> Option<T> {
        let s2 = self.residual_variance?;
        let zs: Vec<T> = match &self.standardization {
            Some((mean, scale)) => z
                .iter()
                .zip(mean.iter().zip(scale))
                .map(|(&v, (&m, &s))| (v - m) / s)
                .collect(),
            None => z.to_vec(),
        };
        let n = self.exponents.len();
        let mut b = vec![T::zero(); n];
        expand_into(&self.exponents, &zs, &mut b);
        let mut q = T::zero();
        for i in 0..n {
            for j in 0..n {
                q = q + b[i] * self.gram_pinv[i * n + j] * b[j];
            }
        }
        Some((s2 * q.max(T::zero())).sqrt())
    }

    pub fn is_outside_bounds(&self, z: &[T]) -> bool {
        z.iter().zip(&self.bounds).any(|(&v, &(lo, hi))| v < lo || v > hi)
    }
}

fn bounds<T: Scalar>(inputs: &[Vec<T>], dims: usize) -> Vec<(T, T)> {
    (0..dims)
        .map(|j| {
            inputs.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), z| {
                (lo.min(z[j]), hi.max(z[j]))
            })
        })
        .collect()
}

/// Least-squares fit of `basis` to `samples`: the minimal-norm minimizer of
/// `Σ (Ψ(X) − Y)²` with the SVD solver, or the normal-equations solution.
pub fn fit_polynomial<T: Scalar>(
    samples: &SampleSet<T>,
    basis: &BasisSpec,
    options: FitOptions,
) -> Result<PolynomialFit<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let dims = samples.n_factors() + samples.state_dim() + usize::from(options.include_time);
    let exponents = basis.exponents(dims);
    let n = samples.len();

    let mut inputs = Vec::with_capacity(n);
    let mut buf = Vec::with_capacity(dims);
    for i in 0..n {
        samples.input(i, options.include_time, &mut buf);
        inputs.push(buf.clone());
    }
    let bounds = bounds(&inputs, dims);

    let standardization = options.standardize.then(|| {
        let nn = T::of_usize(n);
        let mean: Vec<T> = (0..dims)
            .map(|j| inputs.iter().map(|z| z[j]).sum::<T>() / nn)
            .collect();
        let scale: Vec<T> = (0..dims)
            .map(|j| {
                let var = inputs.iter().map(|z| (z[j] - mean[j]).powi(2)).sum::<T>() / nn;
                let sd = var.sqrt();
                if sd > T::zero() && sd.is_finite() {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        (mean, scale)
    });

    let mut cols = vec![Vec::with_capacity(n); exponents.len()];
    let mut row = vec![T::zero(); exponents.len()];
    let mut zs = vec![T::zero(); dims];
    for z in &inputs {
        match &standardization {
            Some((mean, scale)) => {
                for j in 0..dims {
                    zs[j] = (z[j] - mean[j]) / scale[j];
                }
            }
            None => zs.copy_from_slice(z),
        }
        expand_into(&exponents, &zs, &mut row);
        for (c, &v) in cols.iter_mut().zip(&row) {
            c.push(v);
        }
    }
    let design = ColMatrix::from_columns(n, cols)?;
    let sol = match options.solver {
        Solver::Svd => lstsq_min_norm(&design, samples.y())?,
        Solver::NormalEquations => solve_normal_equations(&design, samples.y())?,
    };

    let coefficients = match &standardization {
        Some((mean, scale)) => to_raw_coordinates(&exponents, &sol.coefficients, mean, scale)?,
        None => sol.coefficients.clone(),
    };
    let dof = n.saturating_sub(sol.rank);
    let residual_variance =
        (dof > 0).then(|| sol.residual_norm * sol.residual_norm / T::of_usize(dof));
    Ok(PolynomialFit {
        coefficients,
        rank: sol.rank,
        n_samples: n,
        condition: sol.condition.is_finite().then_some(sol.condition),
        residual_norm: sol.residual_norm,
        residual_variance,
        solver: options.solver,
        include_time: options.include_time,
        standardization,
        gram_pinv: sol.gram_pinv,
        bounds,
        exponents,
    })
}

/// Rewrites coefficients of monomials in `(z − m) / s` as coefficients of
/// monomials in `z` by binomial expansion. The basis is closed under taking
/// lower-order exponents, so every expanded term has a slot.
fn to_raw_coordinates<T: Scalar>(
    exponents: &[Vec<u32>],
    coefficients: &[T],
    mean: &[T],
    scale: &[T],
) -> Result<Vec<T>> {
    let index: HashMap<&[u32], usize> = exponents
        .iter()
        .enumerate()
        .map(|(k, e)| (e.as_slice(), k))
        .collect();
    let mut raw = vec![T::zero(); exponents.len()];
    for (e, &c) in exponents.iter().zip(coefficients) {
        if c == T::zero() {
            continue;
        }
        let mut terms: Vec<(Vec<u32>, T)> = vec![(vec![0; e.len()], c)];
        for (j, &ej) in e.iter().enumerate() {
            if ej == 0 {
                continue;
            }
            let inv = T::one() / scale[j].powi(ej as i32);
            let mut next = Vec::with_capacity(terms.len() * (ej as usize + 1));
            for (exp, coef) in &terms {
                for i in 0..=ej {
                    let mut exp2 = exp.clone();
                    exp2[j] += i;
                    let w = T::of(binomial(ej, i)) * (-mean[j]).powi((ej - i) as i32) * inv;
                    next.push((exp2, *coef * w));
                }
            }
            terms = next;
        }
        for (exp, coef) in terms {
            let k = index.get(exp.as_slice()).ok_or_else(|| {
                Error::InvalidArgument(
                    "basis is not closed under lower-order terms; disable standardization".into(),
                )
            })?;
            raw[*k] = raw[*k] + coef;
        }
    }
    Ok(raw)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::Provenance;
    use approx::assert_relative_eq;

    fn one_dim(xs: &[f64], ys: &[f64]) -> SampleSet<f64> {
        let mut s = SampleSet::new(1, 0);
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            s.push(
                1.0,
                &[x],
                &[],
                y,
                Provenance {
                    scenario: i,
                    time_index: 1,
                    synthetic: false,
                },
            );
        }
        s
    }

    #[test]
    fn constant_response_fits_constant() {
        let s = one_dim(&[1.0, 2.0, 5.0, 7.0], &[7.0; 4]);
        let fit = fit_polynomial(&s, &BasisSpec::quadratic(), FitOptions::default()).unwrap();
        assert_relative_eq!(fit.coefficients[0], 7.0, max_relative = 1e-10);
        assert!(fit.coefficients[1].abs() < 1e-9);
        assert!(fit.coefficients[2].abs() < 1e-10);
    }

    #[test]
    fn standardized_fit_reports_raw_coefficients() {
        let xs: Vec<f64> = (0..20).map(|i| 80.0 + 3.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 5.0 - 0.3 * x + 0.002 * x * x).collect();
        let s = one_dim(&xs, &ys);
        let opts = FitOptions {
            standardize: true,
            ..FitOptions::default()
        };
        let fit = fit_polynomial(&s, &BasisSpec::quadratic(), opts).unwrap();
        assert_relative_eq!(fit.coefficients[0], 5.0, max_relative = 1e-8);
        assert_relative_eq!(fit.coefficients[1], -0.3, max_relative = 1e-8);
        assert_relative_eq!(fit.coefficients[2], 0.002, max_relative = 1e-8);
        assert_relative_eq!(fit.predict(&[100.0]), 5.0 - 30.0 + 20.0, max_relative = 1e-9);
    }

    #[test]
    fn empty_samples_rejected() {
        let s = SampleSet::<f64>::new(1, 0);
        assert!(matches!(
            fit_polynomial(&s, &BasisSpec::quadratic(), FitOptions::default()),
            Err(Error::EmptySampleSet)
        ));
    }

    #[test]
    fn standard_error_vanishes_without_noise() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x).collect();
        let fit = fit_polynomial(&one_dim(&xs, &ys), &BasisSpec::new(1, true), FitOptions::default())
            .unwrap();
        assert!(fit.standard_error(&[3.0]).unwrap() < 1e-6);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(3, 0), 1.0);
        assert_eq!(binomial(3, 3), 1.0);
    }
}

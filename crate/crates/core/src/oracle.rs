//! Reference prices: the Black–Scholes closed form and brute-force nested
//! Monte Carlo from a single `(t, x, a)` state.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product::ProductSpec;
use crate::scalar::Scalar;
use crate::scenario::{substream, GbmParams, GbmStepper, TimeGrid};
use crate::valuation::DiscountModel;

/// How [`normal_cdf`] is evaluated; reported in diagnostics.
pub const NORMAL_CDF_METHOD: &str = "0.5 * erfc(-x / sqrt(2)) with libm::erfc (f64)";

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn check_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")))
    }
}

fn d1_d2(spot: f64, strike: f64, rate: f64, vol: f64, tau: f64) -> (f64, f64) {
    let sd = vol * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * vol * vol) * tau) / sd;
    (d1, d1 - sd)
}

/// Black–Scholes value of a European call, continuous compounding.
pub fn black_scholes_call<T: Scalar>(spot: T, strike: T, rate: T, volatility: T, time_to_maturity: T) -> Result<T> {
    check_positive("spot", spot)?;
    check_positive("strike", strike)?;
    check_positive("volatility", volatility)?;
    check_positive("time_to_maturity", time_to_maturity)?;
    let (s, k, r, tau) = (spot.as_f64(), strike.as_f64(), rate.as_f64(), time_to_maturity.as_f64());
    let (d1, d2) = d1_d2(s, k, r, volatility.as_f64(), tau);
    Ok(T::of(s * normal_cdf(d1) - k * (-r * tau).exp() * normal_cdf(d2)))
}

pub fn black_scholes_put<T: Scalar>(spot: T, strike: T, rate: T, volatility: T, time_to_maturity: T) -> Result<T> {
    check_positive("spot", spot)?;
    check_positive("strike", strike)?;
    check_positive("volatility", volatility)?;
    check_positive("time_to_maturity", time_to_maturity)?;
    let (s, k, r, tau) = (spot.as_f64(), strike.as_f64(), rate.as_f64(), time_to_maturity.as_f64());
    let (d1, d2) = d1_d2(s, k, r, volatility.as_f64(), tau);
    Ok(T::of(k * (-r * tau).exp() * normal_cdf(-d2) - s * normal_cdf(-d1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedMcConfig {
    pub inner_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedEstimate<T> {
    pub price: T,
    pub std_error: T,
    /// GBM transitions simulated.
    pub path_steps: u64,
}

/// Inner paths are drawn in blocks of this size, one random stream per block,
/// so results do not depend on the thread count.
const BLOCK: usize = 1024;

/// Nested Monte Carlo price at grid index `time_index` with risk factors `x`
/// and path state `a`: inner GBM paths over the product's remaining fixings,
/// discounted payoff mean and its standard error.
pub fn nested_mc_price<T: Scalar>(
    grid: &TimeGrid<T>,
    time_index: usize,
    x: &[T],
    a: &[T],
    product: &ProductSpec<T>,
    params: &GbmParams<T>,
    config: &NestedMcConfig,
    discount: &DiscountModel<T>,
) -> Result<NestedEstimate<T>> {
    if config.inner_paths == 0 {
        return Err(Error::InvalidArgument("nested MC needs at least one inner path".into()));
    }
    let maturity = product.maturity(grid)?;
    if time_index > product.maturity_index {
        return Err(Error::InvalidArgument("valuation time is after maturity".into()));
    }
    if a.len() != product.state_dim() {
        return Err(Error::ShapeError(format!(
            "product state has {} entries, got {}",
            product.state_dim(),
            a.len()
        )));
    }
    let stepper = GbmStepper::new(params)?;
    if x.len() != stepper.n_factors() {
        return Err(Error::ShapeError("risk-factor tuple does not match GBM".into()));
    }
    let fixings = product.fixing_indices(time_index);
    let df = discount.factor(grid.time(time_index), maturity, 0)?;
    let times = grid.times();

    let n_blocks = config.inner_paths.div_ceil(BLOCK);
    let partial: Vec<(T, T)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng: ChaCha8Rng = substream(config.seed, b as u64);
            let count = BLOCK.min(config.inner_paths - b * BLOCK);
            let mut xs = x.to_vec();
            let mut state = a.to_vec();
            let mut next = a.to_vec();
            let mut z = vec![T::zero(); xs.len()];
            let (mut sum, mut sumsq) = (T::zero(), T::zero());
            for _ in 0..count {
                xs.copy_from_slice(x);
                state.copy_from_slice(a);
                let mut prev = time_index;
                for &k in &fixings {
                    stepper.step(&mut xs, times[k] - times[prev], &mut rng, &mut z);
                    product.update_state_into(&state, &xs, k, &mut next);
                    std::mem::swap(&mut state, &mut next);
                    prev = k;
                }
                let v = df * product.payoff(&xs, &state);
                sum = sum + v;
                sumsq = sumsq + v * v;
            }
            (sum, sumsq)
        })
        .collect();
    let (sum, sumsq) = partial
        .into_iter()
        .fold((T::zero(), T::zero()), |(s, q), (a, b)| (s + a, q + b));
    let n = T::of_usize(config.inner_paths);
    let mean = sum / n;
    let std_error = if config.inner_paths > 1 {
        let var = ((sumsq - n * mean * mean) / (n - T::one())).max(T::zero());
        (var / n).sqrt()
    } else {
        T::zero()
    };
    Ok(NestedEstimate {
        price: mean,
        std_error,
        path_steps: (config.inner_paths * fixings.len()) as u64,
    })
}

/// Error of estimates against reference prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport<T> {
    pub n: usize,
    pub max_abs_error: T,
    pub rmse: T,
    /// `(estimate − reference) / se`, when a positive standard error exists.
    pub z_scores: Vec<Option<T>>,
}

/// Deterministic comparison of `estimates` against `reference`, with the
/// reference standard errors (and optionally the estimates' own) combined in
/// quadrature for z-scores.
pub fn compare<T: Scalar>(
    estimates: &[T],
    reference: &[T],
    reference_se: Option<&[T]>,
    estimate_se: Option<&[T]>,
) -> Result<ComparisonReport<T>> {
    let n = estimates.len();
    if reference.len() != n
        || reference_se.is_some_and(|s| s.len() != n)
        || estimate_se.is_some_and(|s| s.len() != n)
    {
        return Err(Error::ShapeError("compared tables differ in size".into()));
    }
    let mut max_abs_error = T::zero();
    let mut sq = T::zero();
    let mut z_scores = Vec::with_capacity(n);
    for i in 0..n {
        let e = estimates[i] - reference[i];
        max_abs_error = max_abs_error.max(e.abs());
        sq = sq + e * e;
        let var = reference_se.map_or(T::zero(), |s| s[i] * s[i])
            + estimate_se.map_or(T::zero(), |s| s[i] * s[i]);
        z_scores.push((var > T::zero()).then(|| e / var.sqrt()));
    }
    let rmse = if n == 0 { T::zero() } else { (sq / T::of_usize(n)).sqrt() };
    Ok(ComparisonReport {
        n,
        max_abs_error,
        rmse,
        z_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::ProductKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pinned_at_the_money_value() {
        // 40-digit evaluation of the closed form
        let v = black_scholes_call(100.0, 100.0, 0.0, 0.2, 1.0).unwrap();
        assert_abs_diff_eq!(v, 7.965567455405796, epsilon = 1e-12);
        let put = black_scholes_put(105.0, 95.0, 0.05, 0.3, 0.75).unwrap();
        assert_abs_diff_eq!(put, 4.787798910239276, epsilon = 1e-12);
    }

    #[test]
    fn terminal_and_deterministic_limits() {
        let short = black_scholes_call(110.0, 100.0, 0.0, 0.2, 1e-12).unwrap();
        assert_abs_diff_eq!(short, 10.0, epsilon = 1e-9);
        let flat = black_scholes_call(90.0, 100.0, 0.0, 1e-9, 1.0).unwrap();
        assert_abs_diff_eq!(flat, 0.0, epsilon = 1e-9);
        assert!(black_scholes_call(0.0, 100.0, 0.0, 0.2, 1.0).is_err());
        assert!(black_scholes_call(100.0, 100.0, 0.0, 0.2, 0.0).is_err());
    }

    #[test]
    fn cdf_symmetry() {
        for x in [-3.0, -0.5, 0.0, 1.2, 6.0] {
            assert_abs_diff_eq!(normal_cdf(x) + normal_cdf(-x), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_payoff_has_zero_error() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let product = ProductSpec::new(ProductKind::EuropeanCall, 1000.0, 1);
        let params = GbmParams::single(100.0, 0.0, 1e-12, 1);
        let cfg = NestedMcConfig {
            inner_paths: 500,
            seed: 1,
        };
        let e = nested_mc_price(&grid, 0, &[100.0], &[], &product, &params, &cfg, &DiscountModel::flat(0.0))
            .unwrap();
        assert_eq!(e.price, 0.0);
        assert_eq!(e.std_error, 0.0);
        let zero = NestedMcConfig { inner_paths: 0, seed: 1 };
        assert!(nested_mc_price(&grid, 0, &[100.0], &[], &product, &params, &zero, &DiscountModel::flat(0.0)).is_err());
    }

    #[test]
    fn at_maturity_pays_immediately() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let product = ProductSpec::new(ProductKind::EuropeanCall, 100.0, 1);
        let params = GbmParams::single(100.0, 0.0, 0.2, 1);
        let cfg = NestedMcConfig { inner_paths: 10, seed: 3 };
        let e = nested_mc_price(&grid, 1, &[120.0], &[], &product, &params, &cfg, &DiscountModel::flat(0.05))
            .unwrap();
        assert_eq!(e.price, 20.0);
        assert_eq!(e.path_steps, 0);
    }

    #[test]
    fn compare_reports() {
        let a = [1.0, 2.0, 3.0];
        let r = compare(&a, &a, None, None).unwrap();
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.rmse, 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        let r = compare(&shifted, &a, Some(&[0.25, 0.25, 0.0]), None).unwrap();
        assert_eq!(r.max_abs_error, 0.5);
        assert_eq!(r.z_scores, vec![Some(2.0), Some(2.0), None]);
        assert!(compare(&a, &a[..2], None, None).is_err());
    }
}

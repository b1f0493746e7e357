//! Empirical risk measures over a physical-scenario loss distribution.
//!
//! Sign convention: positive numbers are losses, `loss = base − V_p(t, ω)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PnlDistribution<T> {
    losses: Vec<T>,
    pub horizon_index: usize,
    pub base_price: T,
}

impl<T: Scalar> PnlDistribution<T> {
    pub fn from_losses(losses: Vec<T>) -> Result<Self> {
        if let Some(bad) = losses.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite loss {bad}")));
        }
        Ok(Self {
            losses,
            horizon_index: 0,
            base_price: T::zero(),
        })
    }

    /// Losses `base − price` for the prices of one horizon.
    pub fn from_prices(base_price: T, prices: &[T], horizon_index: usize) -> Result<Self> {
        let mut d = Self::from_losses(prices.iter().map(|&p| base_price - p).collect())?;
        d.horizon_index = horizon_index;
        d.base_price = base_price;
        Ok(d)
    }

    pub fn losses(&self) -> &[T] {
        &self.losses
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    fn sorted(&self) -> Vec<T> {
        let mut v = self.losses.clone();
        v.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
        v
    }
}

fn check_level<T: Scalar>(level: T) -> Result<()> {
    if level > T::zero() && level < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")))
    }
}

/// 1-based rank `⌈level · n⌉` of the VaR sample, computed in f64.
fn var_rank<T: Scalar>(level: T, n: usize) -> usize {
    let r = (level.as_f64() * n as f64).ceil() as usize;
    r.clamp(1, n)
}

/// Lower inverse-CDF quantile: the `⌈level · n⌉`-th smallest loss.
pub fn value_at_risk<T: Scalar>(dist: &PnlDistribution<T>, level: T) -> Result<T> {
    check_level(level)?;
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    Ok(dist.sorted()[var_rank(level, dist.len()) - 1])
}

/// Mean of the losses ranked at or beyond the VaR sample.
pub fn conditional_value_at_risk<T: Scalar>(dist: &PnlDistribution<T>, level: T) -> Result<T> {
    check_level(level)?;
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let sorted = dist.sorted();
    let tail = &sorted[var_rank(level, sorted.len()) - 1..];
    Ok(tail.iter().copied().sum::<T>() / T::of_usize(tail.len()))
}

/// Unbiased (`n − 1`) sample standard deviation.
pub fn std_dev<T: Scalar>(dist: &PnlDistribution<T>) -> Result<T> {
    let n = dist.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "standard deviation needs 2 samples, got {n}"
        )));
    }
    let nn = T::of_usize(n);
    let mean = dist.losses.iter().copied().sum::<T>() / nn;
    let ss = dist.losses.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    Ok((ss / (nn - T::one())).sqrt())
}

/// One horizon's report; positive numbers are losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub time_index: usize,
    pub level: f64,
    pub base: f64,
    pub var: f64,
    pub cvar: f64,
    /// `None` with fewer than two scenarios.
    pub std: Option<f64>,
    pub n: usize,
}

pub fn risk_report(dist: &PnlDistribution<f64>, level: f64) -> Result<RiskReport> {
    Ok(RiskReport {
        time_index: dist.horizon_index,
        level,
        base: dist.base_price,
        var: value_at_risk(dist, level)?,
        cvar: conditional_value_at_risk(dist, level)?,
        std: std_dev(dist).ok(),
        n: dist.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: Vec<f64>) -> PnlDistribution<f64> {
        PnlDistribution::from_losses(v).unwrap()
    }

    #[test]
    fn constant_distribution() {
        let c = d(vec![3.0; 10]);
        assert_eq!(value_at_risk(&c, 0.95).unwrap(), 3.0);
        assert_eq!(value_at_risk(&c, 0.01).unwrap(), 3.0);
        assert_eq!(conditional_value_at_risk(&c, 0.95).unwrap(), 3.0);
        assert_eq!(std_dev(&c).unwrap(), 0.0);
    }

    #[test]
    fn one_to_hundred() {
        let h = d((1..=100).map(f64::from).collect());
        assert_eq!(value_at_risk(&h, 0.95).unwrap(), 95.0);
        assert_eq!(conditional_value_at_risk(&h, 0.95).unwrap(), 97.5);
    }

    #[test]
    fn single_sample() {
        let one = d(vec![5.0]);
        assert_eq!(value_at_risk(&one, 0.99).unwrap(), 5.0);
        assert!(matches!(std_dev(&one), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn two_point_std() {
        assert!((std_dev(&d(vec![0.0, 2.0])).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let empty = d(vec![]);
        assert!(matches!(value_at_risk(&empty, 0.5), Err(Error::EmptyDistribution)));
        assert!(matches!(conditional_value_at_risk(&empty, 0.5), Err(Error::EmptyDistribution)));
        let x = d(vec![1.0]);
        assert!(value_at_risk(&x, 1.0).is_err());
        assert!(value_at_risk(&x, 0.0).is_err());
        assert!(PnlDistribution::from_losses(vec![f64::NAN]).is_err());
    }

    #[test]
    fn losses_from_prices() {
        let p = PnlDistribution::from_prices(10.0, &[8.0, 12.0], 1).unwrap();
        assert_eq!(p.losses(), &[2.0, -2.0]);
        assert_eq!(p.horizon_index, 1);
    }
}

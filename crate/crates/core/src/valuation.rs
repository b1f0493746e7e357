//! Discounting and accumulation of remaining cash flows into values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::product::CashFlowTable;
use crate::scalar::Scalar;
use crate::scenario::TimeGrid;

/// Deterministic discount curve. Only flat continuously-compounded rates ship;
/// `factor` takes the scenario so path-dependent curves fit the same call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscountModel<T> {
    #[serde(rename = "flat")]
    FlatRate { rate: T },
}

/// Which time the remaining flows are discounted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountBase {
    /// Each value is expressed in money of its own grid time.
    #[default]
    ValuationTime,
    /// Every flow is discounted to the first grid time.
    InitialTime,
}

impl<T: Scalar> DiscountModel<T> {
    pub fn flat(rate: T) -> Self {
        DiscountModel::FlatRate { rate }
    }

    pub fn rate(&self) -> T {
        match *self {
            DiscountModel::FlatRate { rate } => rate,
        }
    }

    /// Value at `t_from` of one unit paid at `t_to` in `scenario`.
    pub fn factor(&self, t_from: T, t_to: T, _scenario: usize) -> Result<T> {
        if t_from > t_to {
            return Err(Error::InvalidArgument(format!(
                "discounting from {t_from} back to earlier time {t_to}"
            )));
        }
        Ok(self.factor_unchecked(t_from, t_to))
    }

    pub(crate) fn factor_unchecked(&self, t_from: T, t_to: T) -> T {
        match *self {
            DiscountModel::FlatRate { rate } => {
                if rate == T::zero() {
                    T::one()
                } else {
                    (-rate * (t_to - t_from)).exp()
                }
            }
        }
    }
}

pub fn discount_factor<T: Scalar>(model: &DiscountModel<T>, t_from: T, t_to: T) -> Result<T> {
    model.factor(t_from, t_to, 0)
}

/// Discounted remaining value `V(t, ω)` on the active region.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable<T> {
    grid: TimeGrid<T>,
    n_scenarios: usize,
    values: Vec<T>,
    activation: Vec<usize>,
    base: DiscountBase,
}

impl<T: Scalar> ValueTable<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn base(&self) -> DiscountBase {
        self.base
    }

    pub fn activation(&self, scenario: usize) -> usize {
        self.activation[scenario]
    }

    pub fn get(&self, time_index: usize, scenario: usize) -> Option<T> {
        if time_index < self.activation[scenario] || time_index >= self.grid.len() {
            return None;
        }
        Some(self.values[time_index * self.n_scenarios + scenario])
    }
}

/// `V(t_i, ω) = Σ_{t ≥ t_i} d(·, t) C(t, ω)`, discounted to `t_i`
/// ([`DiscountBase::ValuationTime`]) or to the first grid time
/// ([`DiscountBase::InitialTime`]).
pub fn accumulate_remaining_value<T: Scalar>(
    cashflows: &CashFlowTable<T>,
    model: &DiscountModel<T>,
    base: DiscountBase,
) -> ValueTable<T> {
    let grid = cashflows.grid();
    let times = grid.times();
    let n = cashflows.n_scenarios();
    let n_t = times.len();
    let mut values = vec![T::zero(); n_t * n];
    for w in 0..n {
        let act = cashflows.activation(w);
        let mut acc = T::zero();
        for ti in (act..n_t).rev() {
            let c = cashflows.get(ti, w).unwrap_or(T::zero());
            acc = match base {
                DiscountBase::ValuationTime => {
                    let carry = if ti + 1 < n_t {
                        model.factor_unchecked(times[ti], times[ti + 1]) * acc
                    } else {
                        T::zero()
                    };
                    c + carry
                }
                DiscountBase::InitialTime => acc + model.factor_unchecked(times[0], times[ti]) * c,
            };
            values[ti * n + w] = acc;
        }
    }
    ValueTable {
        grid: grid.clone(),
        n_scenarios: n,
        values,
        activation: (0..n).map(|w| cashflows.activation(w)).collect(),
        base,
    }
}

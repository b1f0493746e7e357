//! Payoffs, path-dependent state (initialization and update along a path),
//! state tables over scenario sets, and maturity cash flows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scenario::{ScenarioSet, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    EuropeanCall,
    EuropeanPut,
    AsianCall,
    AsianPut,
    /// Up-and-out call, monitored at grid times.
    BarrierKnockOutCall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpec<T> {
    pub kind: ProductKind,
    pub strike: T,
    /// Index of the maturity in the risk-neutral grid.
    pub maturity_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_level: Option<T>,
    #[serde(default)]
    pub underlying_factor: usize,
}

impl<T: Scalar> ProductSpec<T> {
    pub fn new(kind: ProductKind, strike: T, maturity_index: usize) -> Self {
        Self {
            kind,
            strike,
            maturity_index,
            barrier_level: None,
            underlying_factor: 0,
        }
    }

    pub fn barrier(strike: T, barrier_level: T, maturity_index: usize) -> Self {
        Self {
            barrier_level: Some(barrier_level),
            ..Self::new(ProductKind::BarrierKnockOutCall, strike, maturity_index)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > T::zero()) || !self.strike.is_finite() {
            return Err(Error::config("product.strike", format!("must be > 0, got {}", self.strike)));
        }
        match (self.kind, self.barrier_level) {
            (ProductKind::BarrierKnockOutCall, None) => {
                Err(Error::config("product.barrier_level", "required for barrier products"))
            }
            (ProductKind::BarrierKnockOutCall, Some(b)) if !(b > T::zero()) || !b.is_finite() => {
                Err(Error::config("product.barrier_level", format!("must be > 0, got {b}")))
            }
            _ => Ok(()),
        }
    }

    /// Dimension of the path-dependent state tuple.
    pub fn state_dim(&self) -> usize {
        match self.kind {
            ProductKind::EuropeanCall | ProductKind::EuropeanPut => 0,
            ProductKind::AsianCall | ProductKind::AsianPut | ProductKind::BarrierKnockOutCall => 1,
        }
    }

    pub fn is_path_dependent(&self) -> bool {
        self.state_dim() > 0
    }

    pub fn maturity(&self, grid: &TimeGrid<T>) -> Result<T> {
        if self.maturity_index >= grid.len() {
            return Err(Error::GridMismatch(format!(
                "maturity index {} outside a grid of {} times",
                self.maturity_index,
                grid.len()
            )));
        }
        Ok(grid.time(self.maturity_index))
    }

    fn underlying(&self, x: &[T]) -> T {
        x[self.underlying_factor]
    }

    /// State at the first fixing.
    pub fn init_state_into(&self, x0: &[T], out: &mut [T]) {
        let s = self.underlying(x0);
        match self.kind {
            ProductKind::EuropeanCall | ProductKind::EuropeanPut => {}
            ProductKind::AsianCall | ProductKind::AsianPut => out[0] = s,
            ProductKind::BarrierKnockOutCall => out[0] = self.alive_flag(T::one(), s),
        }
    }

    /// Absorbs fixing `x` into `prev`. `fixing_count` is the number of
    /// fixings already in `prev`.
    pub fn update_state_into(&self, prev: &[T], x: &[T], fixing_count: usize, out: &mut [T]) {
        let s = self.underlying(x);
        match self.kind {
            ProductKind::EuropeanCall | ProductKind::EuropeanPut => {}
            ProductKind::AsianCall | ProductKind::AsianPut => {
                let n = T::of_usize(fixing_count);
                out[0] = (n * prev[0] + s) / (n + T::one());
            }
            ProductKind::BarrierKnockOutCall => out[0] = self.alive_flag(prev[0], s),
        }
    }

    fn alive_flag(&self, prev: T, s: T) -> T {
        let barrier = self.barrier_level.unwrap_or(T::infinity());
        if prev > T::zero() && s < barrier {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn init_state(&self, x0: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.state_dim()];
        self.init_state_into(x0, &mut out);
        out
    }

    pub fn update_state(&self, prev: &[T], x: &[T], fixing_count: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.state_dim()];
        self.update_state_into(prev, x, fixing_count, &mut out);
        out
    }

    /// Cash flow paid at maturity given the maturity risk factors and state.
    pub fn payoff(&self, x: &[T], state: &[T]) -> T {
        let k = self.strike;
        let zero = T::zero();
        match self.kind {
            ProductKind::EuropeanCall => (self.underlying(x) - k).max(zero),
            ProductKind::EuropeanPut => (k - self.underlying(x)).max(zero),
            ProductKind::AsianCall => (state[0] - k).max(zero),
            ProductKind::AsianPut => (k - state[0]).max(zero),
            ProductKind::BarrierKnockOutCall => {
                if state[0] > zero {
                    (self.underlying(x) - k).max(zero)
                } else {
                    zero
                }
            }
        }
    }

    /// Grid indices after `from` that the product observes, ending at maturity.
    pub fn fixing_indices(&self, from: usize) -> Vec<usize> {
        if from >= self.maturity_index {
            return Vec::new();
        }
        if self.is_path_dependent() {
            ((from + 1)..=self.maturity_index).collect()
        } else {
            vec![self.maturity_index]
        }
    }
}

/// Path-dependent state over `(time, scenario)`, defined on the active region
/// of the scenario set it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStateTable<T> {
    n_times: usize,
    n_scenarios: usize,
    state_dim: usize,
    values: Vec<T>,
    activation: Vec<usize>,
}

impl<T: Scalar> PathStateTable<T> {
    pub fn from_dense(
        n_times: usize,
        n_scenarios: usize,
        state_dim: usize,
        values: Vec<T>,
        activation: Vec<usize>,
    ) -> Result<Self> {
        if values.len() != n_times * n_scenarios * state_dim || activation.len() != n_scenarios {
            return Err(Error::ShapeError("state table dimensions do not match".into()));
        }
        Ok(Self {
            n_times,
            n_scenarios,
            state_dim,
            values,
            activation,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn activation(&self, scenario: usize) -> usize {
        self.activation[scenario]
    }

    pub fn get(&self, time_index: usize, scenario: usize) -> Option<&[T]> {
        if time_index >= self.n_times || time_index < self.activation[scenario] {
            return None;
        }
        let base = (time_index * self.n_scenarios + scenario) * self.state_dim;
        Some(&self.values[base..base + self.state_dim])
    }

    fn slot(&mut self, time_index: usize, scenario: usize) -> &mut [T] {
        let base = (time_index * self.n_scenarios + scenario) * self.state_dim;
        &mut self.values[base..base + self.state_dim]
    }

    pub(crate) fn is_consistent_with(&self, scenarios: &ScenarioSet<T>) -> bool {
        self.n_times == scenarios.grid().len()
            && self.n_scenarios == scenarios.n_scenarios()
            && self.activation == scenarios.activations()
    }
}

/// How forked risk-neutral paths get their initial path state.
#[derive(Debug, Clone, Copy)]
pub enum ForkInitializer<'a, T> {
    /// Stateful products reject forked paths.
    Reject,
    /// Copy the physical state at the fork point.
    CopyPhysical {
        physical: &'a ScenarioSet<T>,
        states: &'a PathStateTable<T>,
    },
    /// Replay the state recurrence along the matching physical path's prefix.
    SyntheticPhysicalPrefix { physical: &'a ScenarioSet<T> },
}

/// Matching physical scenario and physical time index for a forked path.
pub(crate) fn fork_source<T: Scalar>(
    scenarios: &ScenarioSet<T>,
    physical: &ScenarioSet<T>,
    scenario: usize,
) -> Result<(usize, usize)> {
    let act = scenarios.activation(scenario);
    let t = scenarios.grid().time(act);
    let fail = |reason: String| Error::UninitializableForkState {
        scenario: scenario + 1,
        reason,
    };
    let pti = physical
        .grid()
        .index_of(t)
        .ok_or_else(|| fail(format!("activation time {t} is not a physical time")))?;
    if let Some(origin) = scenarios.fork_origin(scenario) {
        if origin.physical_time_index == pti && origin.physical_scenario < physical.n_scenarios() {
            return Ok((origin.physical_scenario, pti));
        }
    }
    let x = scenarios.get(act, scenario).expect("active at activation");
    (0..physical.n_scenarios())
        .find(|&w| physical.get(pti, w) == Some(x))
        .map(|w| (w, pti))
        .ok_or_else(|| fail(format!("no physical scenario has value {x:?} at t = {t}")))
}

/// Runs the state recurrence along every active path.
pub fn compute_state_table<T: Scalar>(
    product: &ProductSpec<T>,
    scenarios: &ScenarioSet<T>,
    initializer: ForkInitializer<'_, T>,
) -> Result<PathStateTable<T>> {
    let n_t = scenarios.grid().len();
    let n = scenarios.n_scenarios();
    let d = product.state_dim();
    let mut table = PathStateTable {
        n_times: n_t,
        n_scenarios: n,
        state_dim: d,
        values: vec![T::zero(); n_t * n * d],
        activation: scenarios.activations().to_vec(),
    };
    if d == 0 {
        return Ok(table);
    }
    let mut prev = vec![T::zero(); d];
    let mut next = vec![T::zero(); d];
    for w in 0..n {
        let act = scenarios.activation(w);
        let x0 = scenarios.get(act, w).expect("active at activation");
        if act == 0 {
            product.init_state_into(x0, &mut prev);
        } else {
            match initializer {
                ForkInitializer::Reject => {
                    return Err(Error::UninitializableForkState {
                        scenario: w + 1,
                        reason: "no fork initializer configured".into(),
                    })
                }
                ForkInitializer::CopyPhysical { physical, states } => {
                    let (pw, pti) = fork_source(scenarios, physical, w)?;
                    let a = states.get(pti, pw).ok_or_else(|| Error::UninitializableForkState {
                        scenario: w + 1,
                        reason: "physical state undefined at fork".into(),
                    })?;
                    prev.copy_from_slice(a);
                }
                ForkInitializer::SyntheticPhysicalPrefix { physical } => {
                    let (pw, pti) = fork_source(scenarios, physical, w)?;
                    replay_prefix(product, physical, pw, pti, &mut prev);
                }
            }
        }
        table.slot(act, w).copy_from_slice(&prev);
        for ti in (act + 1)..n_t {
            let x = scenarios.get(ti, w).expect("active after activation");
            product.update_state_into(&prev, x, ti, &mut next);
            std::mem::swap(&mut prev, &mut next);
            table.slot(ti, w).copy_from_slice(&prev);
        }
    }
    Ok(table)
}

/// State of physical path `w` after its fixings `0..=until`.
fn replay_prefix<T: Scalar>(
    product: &ProductSpec<T>,
    physical: &ScenarioSet<T>,
    w: usize,
    until: usize,
    out: &mut [T],
) {
    let mut next = vec![T::zero(); out.len()];
    product.init_state_into(physical.get(0, w).expect("physical is dense"), out);
    for ti in 1..=until {
        product.update_state_into(out, physical.get(ti, w).expect("physical is dense"), ti, &mut next);
        out.copy_from_slice(&next);
    }
}

/// Cash amounts over `(time, scenario)`; zero where nothing is paid.
#[derive(Debug, Clone, PartialEq)]
pub struct CashFlowTable<T> {
    grid: TimeGrid<T>,
    n_scenarios: usize,
    values: Vec<T>,
    activation: Vec<usize>,
}

impl<T: Scalar> CashFlowTable<T> {
    pub fn from_dense(
        grid: TimeGrid<T>,
        n_scenarios: usize,
        values: Vec<T>,
        activation: Vec<usize>,
    ) -> Result<Self> {
        if values.len() != grid.len() * n_scenarios || activation.len() != n_scenarios {
            return Err(Error::ShapeError("cash-flow table dimensions do not match".into()));
        }
        Ok(Self {
            grid,
            n_scenarios,
            values,
            activation,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
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

/// Maturity payoff on every active path; every other entry is zero.
pub fn compute_cashflows<T: Scalar>(
    product: &ProductSpec<T>,
    scenarios: &ScenarioSet<T>,
    states: &PathStateTable<T>,
) -> Result<CashFlowTable<T>> {
    product.maturity(scenarios.grid())?;
    if !states.is_consistent_with(scenarios) || states.state_dim() != product.state_dim() {
        return Err(Error::ShapeError("state table does not match scenario set".into()));
    }
    let n = scenarios.n_scenarios();
    let m = product.maturity_index;
    let mut values = vec![T::zero(); scenarios.grid().len() * n];
    for w in 0..n {
        if let (Some(x), Some(a)) = (scenarios.get(m, w), states.get(m, w)) {
            values[m * n + w] = product.payoff(x, a);
        }
    }
    CashFlowTable::from_dense(scenarios.grid().clone(), n, values, scenarios.activations().to_vec())
}

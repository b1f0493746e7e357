//! Regression samples `(X, Y)` drawn from the risk-neutral simulation and the
//! smoothing operators fitted on them.
//!
//! `X = (t, risk factors, path state)` and `Y` is the discounted remaining
//! value at `(t, ω)`. Only active pairs (`t ≥ I(ω)`) become samples. Forked
//! paths can optionally contribute extra samples from their synthetic history,
//! i.e. the physical path prefix they were forked from, see
//! [`SyntheticHistory`].

mod basis;
mod kernel;
mod polynomial;
mod smoother;

pub use basis::BasisSpec;
pub use kernel::{fit_kernel, Bandwidth, KernelSmoother};
pub use polynomial::{fit_polynomial, FitOptions, PolynomialFit};
pub use smoother::{fit, Estimate, FitConfig, FitDiagnostics, Smoother, SmootherKind};

use crate::error::{Error, Result};
use crate::product::{fork_source, PathStateTable};
use crate::scalar::Scalar;
use crate::scenario::ScenarioSet;
use crate::valuation::{DiscountBase, DiscountModel, ValueTable};

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub scenario: usize,
    pub time_index: usize,
    /// Taken from the synthetic (physical) history of a forked path.
    pub synthetic: bool,
}

/// Regression samples in struct-of-arrays layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    n_factors: usize,
    state_dim: usize,
    times: Vec<T>,
    /// Risk factors then state, `n_factors + state_dim` per sample.
    features: Vec<T>,
    y: Vec<T>,
    provenance: Vec<Provenance>,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(n_factors: usize, state_dim: usize) -> Self {
        Self {
            n_factors,
            state_dim,
            times: Vec::new(),
            features: Vec::new(),
            y: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn push(&mut self, t: T, x: &[T], a: &[T], y: T, provenance: Provenance) {
        debug_assert_eq!(x.len(), self.n_factors);
        debug_assert_eq!(a.len(), self.state_dim);
        self.times.push(t);
        self.features.extend_from_slice(x);
        self.features.extend_from_slice(a);
        self.y.push(y);
        self.provenance.push(provenance);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn time(&self, i: usize) -> T {
        self.times[i]
    }

    /// Risk factors followed by path state of sample `i`.
    pub fn features(&self, i: usize) -> &[T] {
        let w = self.n_factors + self.state_dim;
        &self.features[i * w..(i + 1) * w]
    }

    pub fn risk_factors(&self, i: usize) -> &[T] {
        &self.features(i)[..self.n_factors]
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.features(i)[self.n_factors..]
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Regression input of sample `i`, with or without the time coordinate.
    pub(crate) fn input(&self, i: usize, include_time: bool, out: &mut Vec<T>) {
        out.clear();
        if include_time {
            out.push(self.times[i]);
        }
        out.extend_from_slice(self.features(i));
    }

    /// Samples reordered by `perm` (sample `k` of the result is `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::new(self.n_factors, self.state_dim);
        for &i in perm {
            out.push(
                self.times[i],
                self.risk_factors(i),
                self.state(i),
                self.y[i],
                self.provenance[i],
            );
        }
        out
    }
}

/// Physical data used to extend forked paths backwards in time.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticHistory<'a, T> {
    pub physical: &'a ScenarioSet<T>,
    pub physical_states: &'a PathStateTable<T>,
    pub discount: DiscountModel<T>,
}

fn check_inputs<T: Scalar>(
    scenarios: &ScenarioSet<T>,
    states: &PathStateTable<T>,
    values: &ValueTable<T>,
) -> Result<()> {
    if !states.is_consistent_with(scenarios)
        || values.grid().times() != scenarios.grid().times()
        || values.n_scenarios() != scenarios.n_scenarios()
    {
        return Err(Error::ShapeError(
            "scenario, state, and value tables disagree on grid or scenario count".into(),
        ));
    }
    Ok(())
}

fn time_indices<T: Scalar>(scenarios: &ScenarioSet<T>, times: &[T]) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            scenarios
                .grid()
                .index_of(t)
                .ok_or_else(|| Error::GridMismatch(format!("time {t} is not in the risk-neutral grid")))
        })
        .collect()
}

/// `M(times, paths)`: one sample per active `(t, ω)` with `t` in `times` and
/// `ω` in `paths` (all paths when `None`).
pub fn build_sample_set<T: Scalar>(
    scenarios: &ScenarioSet<T>,
    states: &PathStateTable<T>,
    values: &ValueTable<T>,
    times: &[T],
    paths: Option<&[usize]>,
) -> Result<SampleSet<T>> {
    build_samples(scenarios, states, values, times, paths, None)
}

/// As [`build_sample_set`], plus samples for forked paths at requested times
/// before their activation, taken from the physical path they forked from.
/// The synthetic value is the path's value at activation discounted back,
/// which holds because every product here pays only at maturity.
pub fn build_sample_set_with_history<T: Scalar>(
    scenarios: &ScenarioSet<T>,
    states: &PathStateTable<T>,
    values: &ValueTable<T>,
    times: &[T],
    paths: Option<&[usize]>,
    history: SyntheticHistory<'_, T>,
) -> Result<SampleSet<T>> {
    build_samples(scenarios, states, values, times, paths, Some(history))
}

fn build_samples<T: Scalar>(
    scenarios: &ScenarioSet<T>,
    states: &PathStateTable<T>,
    values: &ValueTable<T>,
    times: &[T],
    paths: Option<&[usize]>,
    history: Option<SyntheticHistory<'_, T>>,
) -> Result<SampleSet<T>> {
    check_inputs(scenarios, states, values)?;
    let indices = time_indices(scenarios, times)?;
    let all: Vec<usize>;
    let paths = match paths {
        Some(p) => {
            if let Some(&bad) = p.iter().find(|&&w| w >= scenarios.n_scenarios()) {
                return Err(Error::InvalidArgument(format!("no scenario {}", bad + 1)));
            }
            p
        }
        None => {
            all = (0..scenarios.n_scenarios()).collect();
            &all
        }
    };
    let mut out = SampleSet::new(scenarios.n_factors(), states.state_dim());
    let grid = scenarios.grid();
    for &ti in &indices {
        let t = grid.time(ti);
        for &w in paths {
            if let (Some(x), Some(a), Some(y)) = (scenarios.get(ti, w), states.get(ti, w), values.get(ti, w)) {
                out.push(
                    t,
                    x,
                    a,
                    y,
                    Provenance {
                        scenario: w,
                        time_index: ti,
                        synthetic: false,
                    },
                );
                continue;
            }
            let Some(h) = history else { continue };
            if scenarios.activation(w) == 0 {
                continue;
            }
            let (pw, _) = fork_source(scenarios, h.physical, w)?;
            let Some(pti) = h.physical.grid().index_of(t) else {
                continue;
            };
            let (Some(x), Some(a)) = (h.physical.get(pti, pw), h.physical_states.get(pti, pw)) else {
                continue;
            };
            let act = scenarios.activation(w);
            let v_act = values.get(act, w).expect("value defined at activation");
            let y = match values.base() {
                DiscountBase::ValuationTime => h.discount.factor_unchecked(t, grid.time(act)) * v_act,
                DiscountBase::InitialTime => v_act,
            };
            out.push(
                t,
                x,
                a,
                y,
                Provenance {
                    scenario: w,
                    time_index: ti,
                    synthetic: true,
                },
            );
        }
    }
    Ok(out)
}

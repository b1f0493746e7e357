//! Physical and risk-neutral scenario sets.
//!
//! A [`ScenarioSet`] stores risk-factor values over a time grid for a number
//! of scenario paths. Every path has an activation index: values exist from
//! that grid index onward and are absent before it. Physical sets are always
//! active from the first grid time; risk-neutral paths forked from a physical
//! scenario start mid-grid.
//!
//! Scenario and time indices in this API are 0-based. File formats use
//! 1-based scenario ids.

mod align;
mod gbm;
mod import;

pub use align::{validate_alignment, validate_alignment_until, AlignmentReport};
pub use gbm::{
    generate_gbm_dispersed, generate_gbm_fixed, generate_gbm_forked, substream, ForkSpec,
    GbmParams, GbmStepper, FORK_STREAM_BASE,
};
pub use import::{
    import_physical, import_physical_csv, import_physical_json, import_risk_neutral_csv,
    write_scenarios_csv, ScenarioRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strictly increasing, non-negative year fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    times: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidTimeGrid("grid needs at least one time".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < T::zero() {
                return Err(Error::InvalidTimeGrid(format!(
                    "time {i} = {t} is not a non-negative finite year fraction"
                )));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::InvalidTimeGrid(format!(
                    "times must be strictly increasing (index {i}: {} then {t})",
                    times[i - 1]
                )));
            }
        }
        Ok(Self {
            times,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.times.len() {
            return Err(Error::InvalidTimeGrid(format!(
                "{} labels for {} times",
                labels.len(),
                self.times.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Re-checks invariants, e.g. after deserialization.
    pub fn validated(self) -> Result<Self> {
        let labels = self.labels;
        let grid = Self::new(self.times)?;
        match labels {
            Some(l) => grid.with_labels(l),
            None => Ok(grid),
        }
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, index: usize) -> T {
        self.times[index]
    }

    pub fn first(&self) -> T {
        self.times[0]
    }

    pub fn last(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.as_ref().map(|l| l[index].as_str())
    }

    /// Index of `t` in the grid, matching up to a relative 1e-12.
    pub fn index_of(&self, t: T) -> Option<usize> {
        let tol = T::of(1e-12) * T::one().max(t.abs());
        self.times.iter().position(|&g| (g - t).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Physical,
    RiskNeutral,
}

/// Provenance of a risk-neutral path forked off a physical scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkOrigin {
    pub physical_scenario: usize,
    /// Fork time as an index into the physical grid.
    pub physical_time_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet<T> {
    grid: TimeGrid<T>,
    kind: ScenarioKind,
    n_scenarios: usize,
    n_factors: usize,
    /// `(time, scenario, factor)` row-major; zeros before activation.
    values: Vec<T>,
    activation: Vec<usize>,
    fork_origin: Vec<Option<ForkOrigin>>,
}

impl<T: Scalar> ScenarioSet<T> {
    /// Builds a set from a dense `(time, scenario, factor)` array. Entries
    /// before a path's activation index are ignored and stored as absent.
    pub fn from_dense(
        kind: ScenarioKind,
        grid: TimeGrid<T>,
        n_scenarios: usize,
        n_factors: usize,
        mut values: Vec<T>,
        activation: Vec<usize>,
    ) -> Result<Self> {
        if n_scenarios == 0 || n_factors == 0 {
            return Err(Error::InvalidArgument(
                "scenario sets need at least one scenario and one factor".into(),
            ));
        }
        if values.len() != grid.len() * n_scenarios * n_factors {
            return Err(Error::ShapeError(format!(
                "expected {} values, got {}",
                grid.len() * n_scenarios * n_factors,
                values.len()
            )));
        }
        if activation.len() != n_scenarios {
            return Err(Error::ShapeError("one activation index per scenario".into()));
        }
        for (w, &a) in activation.iter().enumerate() {
            if a >= grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "scenario {w} activates at index {a}, grid has {} times",
                    grid.len()
                )));
            }
            if kind == ScenarioKind::Physical && a != 0 {
                return Err(Error::InvalidArgument(format!(
                    "physical scenario {w} must be active from the first grid time"
                )));
            }
        }
        for ti in 0..grid.len() {
            for w in 0..n_scenarios {
                let base = (ti * n_scenarios + w) * n_factors;
                let cell = &mut values[base..base + n_factors];
                if ti < activation[w] {
                    cell.iter_mut().for_each(|v| *v = T::zero());
                } else if let Some(bad) = cell.iter().find(|v| !v.is_finite()) {
                    return Err(Error::InvalidValue(format!(
                        "non-finite value {bad} at time index {ti}, scenario {}",
                        w + 1
                    )));
                }
            }
        }
        Ok(Self {
            grid,
            kind,
            n_scenarios,
            n_factors,
            values,
            activation,
            fork_origin: vec![None; n_scenarios],
        })
    }

    pub(crate) fn with_fork_origins(mut self, origins: Vec<Option<ForkOrigin>>) -> Self {
        debug_assert_eq!(origins.len(), self.n_scenarios);
        self.fork_origin = origins;
        self
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn activation(&self, scenario: usize) -> usize {
        self.activation[scenario]
    }

    pub fn activations(&self) -> &[usize] {
        &self.activation
    }

    pub fn fork_origin(&self, scenario: usize) -> Option<ForkOrigin> {
        self.fork_origin[scenario]
    }

    pub fn is_active(&self, time_index: usize, scenario: usize) -> bool {
        time_index < self.grid.len() && time_index >= self.activation[scenario]
    }

    /// Risk-factor tuple at `(time_index, scenario)`, `None` before activation.
    pub fn get(&self, time_index: usize, scenario: usize) -> Option<&[T]> {
        if !self.is_active(time_index, scenario) {
            return None;
        }
        let base = (time_index * self.n_scenarios + scenario) * self.n_factors;
        Some(&self.values[base..base + self.n_factors])
    }

    /// Single factor value, `None` before activation.
    pub fn value(&self, time_index: usize, scenario: usize, factor: usize) -> Option<T> {
        self.get(time_index, scenario).map(|x| x[factor])
    }

    /// Appends the paths of `other`; grids, kinds, and factor counts must match.
    pub fn concat(mut self, other: ScenarioSet<T>) -> Result<Self> {
        if self.grid.times() != other.grid.times() {
            return Err(Error::GridMismatch("cannot concatenate sets on different grids".into()));
        }
        if self.kind != other.kind || self.n_factors != other.n_factors {
            return Err(Error::ShapeError(
                "cannot concatenate sets of different kind or factor count".into(),
            ));
        }
        let n = self.n_scenarios + other.n_scenarios;
        let s = self.n_factors;
        let mut values = Vec::with_capacity(self.grid.len() * n * s);
        for ti in 0..self.grid.len() {
            let a = ti * self.n_scenarios * s;
            values.extend_from_slice(&self.values[a..a + self.n_scenarios * s]);
            let b = ti * other.n_scenarios * s;
            values.extend_from_slice(&other.values[b..b + other.n_scenarios * s]);
        }
        self.values = values;
        self.n_scenarios = n;
        self.activation.extend(other.activation);
        self.fork_origin.extend(other.fork_origin);
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_non_increasing() {
        assert!(matches!(
            TimeGrid::new(vec![0.0, 1.0, 1.0]),
            Err(Error::InvalidTimeGrid(_))
        ));
        assert!(TimeGrid::<f64>::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![-1.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_ok());
    }

    #[test]
    fn grid_lookup_tolerates_roundoff() {
        let g = TimeGrid::new(vec![0.0, 0.1, 0.2 + 0.1]).unwrap();
        assert_eq!(g.index_of(0.3), Some(2));
        assert_eq!(g.index_of(0.25), None);
    }

    #[test]
    fn absent_before_activation() {
        let g = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let set = ScenarioSet::from_dense(
            ScenarioKind::RiskNeutral,
            g,
            2,
            1,
            vec![1.0, f64::NAN, 2.0, 5.0, 3.0, 6.0],
            vec![0, 1],
        )
        .unwrap();
        assert_eq!(set.get(0, 1), None);
        assert_eq!(set.value(1, 1, 0), Some(5.0));
        assert_eq!(set.value(2, 0, 0), Some(3.0));
    }

    #[test]
    fn physical_must_start_at_first_time() {
        let g = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let err = ScenarioSet::from_dense(ScenarioKind::Physical, g, 1, 1, vec![1.0, 1.0], vec![1]);
        assert!(err.is_err());
    }
}

use serde::Serialize;

use super::ScenarioSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport<T> {
    pub aligned: bool,
    /// Physical times up to the horizon that the risk-neutral grid lacks.
    pub missing_times: Vec<T>,
    pub horizon: T,
}

/// Checks that every physical time up to the last risk-neutral time (the
/// product maturity) is a risk-neutral grid time.
pub fn validate_alignment<T: Scalar>(
    physical: &ScenarioSet<T>,
    risk_neutral: &ScenarioSet<T>,
) -> AlignmentReport<T> {
    validate_alignment_until(physical, risk_neutral, risk_neutral.grid().last())
}

pub fn validate_alignment_until<T: Scalar>(
    physical: &ScenarioSet<T>,
    risk_neutral: &ScenarioSet<T>,
    horizon: T,
) -> AlignmentReport<T> {
    let missing_times: Vec<T> = physical
        .grid()
        .times()
        .iter()
        .copied()
        .filter(|&t| t <= horizon && risk_neutral.grid().index_of(t).is_none())
        .collect();
    AlignmentReport {
        aligned: missing_times.is_empty(),
        missing_times,
        horizon,
    }
}

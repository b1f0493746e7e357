//! The small worked example used for reproduction runs: three physical stock
//! scenarios, five risk-neutral paths (plus the dispersed-start and forked
//! variants), a European call and an Asian call with strike 100 maturing at
//! `t3`. Tables are embedded as data so the reproduction needs no files.

use crate::product::{ProductKind, ProductSpec};
use crate::scenario::{ScenarioKind, ScenarioSet, TimeGrid};

pub const STRIKE: f64 = 100.0;
pub const MATURITY_INDEX: usize = 3;

/// `P(t, ω)`, rows are scenarios, columns `t0..t2`.
pub const PHYSICAL: [[f64; 3]; 3] = [
    [100.0, 110.0, 120.0],
    [100.0, 100.0, 100.0],
    [100.0, 90.0, 80.0],
];

/// `Q(t, ω)` for the five fixed-start paths, columns `t0..t3`.
pub const RISK_NEUTRAL: [[f64; 4]; 5] = [
    [100.0, 211.7568, 214.8651, 106.2542],
    [100.0, 112.9350, 70.6952, 70.8322],
    [100.0, 154.1112, 193.8189, 221.6990],
    [100.0, 90.2616, 155.3396, 121.7245],
    [100.0, 174.4274, 199.2726, 258.4810],
];

/// Dispersed-start paths.
pub const DISPERSED: [[f64; 4]; 5] = [
    [80.0, 64.1116, 115.4375, 105.6911],
    [90.0, 41.3639, 72.6489, 100.4893],
    [100.0, 105.1411, 103.5702, 81.8529],
    [110.0, 122.1953, 137.8884, 316.2593],
    [120.0, 83.2175, 87.7915, 84.1920],
];

/// Forked paths 6–11: activation index and values from activation on.
pub const FORKED: [(usize, &[f64]); 6] = [
    (1, &[110.0, 139.2342, 149.1234]),
    (1, &[100.0, 78.9872, 90.2324]),
    (1, &[90.0, 98.9079, 78.2347]),
    (2, &[120.0, 98.8968]),
    (2, &[100.0, 76.2563]),
    (2, &[80.0, 87.2342]),
];

/// European call: maturity payoffs `C(t3, ω)` of the five base paths.
pub const EUROPEAN_CASHFLOWS: [f64; 5] = [6.2542, 0.0, 121.6990, 21.7245, 158.4810];
/// Quadratic coefficients at `t1` and `t2`, rounded to 4 decimals.
pub const EUROPEAN_COEFFS_T1: [f64; 3] = [-651.7604, 9.9033, -0.0317];
pub const EUROPEAN_COEFFS_T2: [f64; 3] = [-137.9136, 2.2651, -0.0058];
/// Prices per physical scenario at `t1` and `t2`, rounded to 2 decimals.
pub const EUROPEAN_PRICES_T1: [f64; 3] = [54.57, 22.01, -16.87];
pub const EUROPEAN_PRICES_T2: [f64; 3] = [49.77, 30.17, 5.90];

/// Asian running averages of the physical paths, columns `t0..t2`.
pub const ASIAN_STATE_PHYSICAL: [[f64; 3]; 3] = [
    [100.0, 105.0, 110.0],
    [100.0, 100.0, 100.0],
    [100.0, 95.0, 90.0],
];

/// Asian running averages of the eleven paths, columns `t0..t3`. Rows 6–11
/// include the averages along the physical history before the fork.
pub const ASIAN_STATE_RISK_NEUTRAL: [[f64; 4]; 11] = [
    [100.0, 155.8784, 175.5406, 158.2190],
    [100.0, 106.4675, 94.5434, 88.6156],
    [100.0, 127.0556, 149.3100, 167.4073],
    [100.0, 95.1308, 115.2004, 116.8314],
    [100.0, 137.2137, 157.9000, 183.0452],
    [100.0, 105.0000, 116.4114, 124.5894],
    [100.0, 100.0000, 92.9957, 92.3049],
    [100.0, 95.0000, 96.3026, 91.7857],
    [100.0, 105.0000, 110.0000, 107.2242],
    [100.0, 100.0000, 100.0000, 94.0641],
    [100.0, 95.0000, 90.0000, 89.3085],
];

/// Asian maturity payoffs of the eleven paths.
pub const ASIAN_CASHFLOWS: [f64; 11] = [
    58.2190, 0.0, 67.4073, 16.8314, 83.0452, 24.5894, 0.0, 0.0, 7.2242, 0.0, 0.0,
];
/// Asian prices per physical scenario at `t1`, rounded to 2 decimals.
pub const ASIAN_PRICES_T1: [f64; 3] = [20.28, 8.24, -5.13];

fn labelled(times: Vec<f64>) -> TimeGrid<f64> {
    let labels = (0..times.len()).map(|i| format!("t{i}")).collect();
    TimeGrid::new(times)
        .and_then(|g| g.with_labels(labels))
        .expect("static grid")
}

pub fn physical_grid() -> TimeGrid<f64> {
    labelled(vec![0.0, 1.0, 2.0])
}

pub fn risk_neutral_grid() -> TimeGrid<f64> {
    labelled(vec![0.0, 1.0, 2.0, 3.0])
}

pub fn physical() -> ScenarioSet<f64> {
    let mut values = Vec::new();
    for t in 0..3 {
        values.extend(PHYSICAL.iter().map(|row| row[t]));
    }
    ScenarioSet::from_dense(ScenarioKind::Physical, physical_grid(), 3, 1, values, vec![0; 3])
        .expect("static table")
}

fn fixed_start(rows: &[[f64; 4]]) -> ScenarioSet<f64> {
    let mut values = Vec::new();
    for t in 0..4 {
        values.extend(rows.iter().map(|row| row[t]));
    }
    ScenarioSet::from_dense(
        ScenarioKind::RiskNeutral,
        risk_neutral_grid(),
        rows.len(),
        1,
        values,
        vec![0; rows.len()],
    )
    .expect("static table")
}

/// The five fixed-start paths.
pub fn risk_neutral() -> ScenarioSet<f64> {
    fixed_start(&RISK_NEUTRAL)
}

pub fn dispersed() -> ScenarioSet<f64> {
    fixed_start(&DISPERSED)
}

/// The five fixed-start paths followed by the six forked paths.
pub fn with_forks() -> ScenarioSet<f64> {
    let n = 11;
    let mut values = vec![0.0; 4 * n];
    for (w, row) in RISK_NEUTRAL.iter().enumerate() {
        for t in 0..4 {
            values[t * n + w] = row[t];
        }
    }
    let mut activation = vec![0; 5];
    for (k, (act, vals)) in FORKED.iter().enumerate() {
        let w = 5 + k;
        activation.push(*act);
        for (j, v) in vals.iter().enumerate() {
            values[(act + j) * n + w] = *v;
        }
    }
    ScenarioSet::from_dense(ScenarioKind::RiskNeutral, risk_neutral_grid(), n, 1, values, activation)
        .expect("static table")
}

pub fn european_call() -> ProductSpec<f64> {
    ProductSpec::new(ProductKind::EuropeanCall, STRIKE, MATURITY_INDEX)
}

pub fn asian_call() -> ProductSpec<f64> {
    ProductSpec::new(ProductKind::AsianCall, STRIKE, MATURITY_INDEX)
}

//! Property suites shared by the `invariants` and `acceptance` test targets.
//! Each suite runs `CASES` random cases and returns the first failure.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use smoothprice::linalg::{lstsq_min_norm, ColMatrix};
use smoothprice::oracle::{black_scholes_call, black_scholes_put, nested_mc_price, NestedMcConfig};
use smoothprice::product::{compute_cashflows, compute_state_table};
use smoothprice::risk::{conditional_value_at_risk, std_dev, value_at_risk, PnlDistribution};
use smoothprice::scenario::{generate_gbm_fixed, generate_gbm_forked, ForkSpec};
use smoothprice::smoothing::{build_sample_set, fit_kernel, fit_polynomial, Bandwidth, FitOptions, Provenance};
use smoothprice::valuation::{accumulate_remaining_value, discount_factor};
use smoothprice::worked_example as wx;
use smoothprice::{
    BasisSpec, CashFlowTable, DiscountBase, DiscountModel, ForkInitializer, GbmParams, ProductKind, ProductSpec,
    SampleSet, ScenarioKind, ScenarioSet, TimeGrid,
};

pub const CASES: u32 = 128;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub fn suites() -> Vec<Suite> {
    vec![
        ("activation filtering", activation_filtering),
        ("gbm activation, positivity, determinism, fork exactness", gbm_structure),
        ("asian recurrence vs brute-force mean", asian_recurrence),
        ("barrier monotonicity and payoff signs", barrier_and_payoffs),
        ("fork-copy exactness", fork_copy_exactness),
        ("discount identity and multiplicativity", discount_identity),
        ("backward recursion consistency", backward_recursion),
        ("zero-rate base equivalence", zero_rate_bases),
        ("residual orthogonality", residual_orthogonality),
        ("minimal-norm property", minimal_norm),
        ("exact reproduction of in-span polynomials", exact_reproduction),
        ("permutation invariance", permutation_invariance),
        ("kernel range-boundedness", kernel_range),
        ("black-scholes monotonicity and put-call parity", black_scholes_shape),
        ("var/cvar translation and homogeneity", var_translation_homogeneity),
        ("cvar >= var, var monotone in level", cvar_dominates_var),
        ("rank-deficient prediction uniqueness", asian_prediction_uniqueness),
        ("gbm log-increment moments", gbm_moments),
        ("nested standard-error scaling", nested_se_scaling),
    ]
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * a.abs().max(b.abs()).max(1.0)
}

fn dense(kind: ScenarioKind, times: Vec<f64>, paths: &[Vec<f64>], activation: Vec<usize>) -> ScenarioSet<f64> {
    let n = paths.len();
    let mut values = Vec::new();
    for ti in 0..times.len() {
        values.extend(paths.iter().map(|p| p[ti]));
    }
    ScenarioSet::from_dense(kind, TimeGrid::new(times).unwrap(), n, 1, values, activation).unwrap()
}

fn paths(n_t: usize, max_paths: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(1.0f64..200.0, n_t), 1..max_paths)
}

pub fn activation_filtering() -> Result<(), String> {
    let strat = paths(5, 8).prop_flat_map(|p| {
        let n = p.len();
        (Just(p), prop::collection::vec(0usize..5, n))
    });
    run(strat, |(p, act)| {
        let q = dense(ScenarioKind::RiskNeutral, vec![0.0, 0.5, 1.0, 1.5, 2.0], &p, act.clone());
        let product = ProductSpec::new(ProductKind::EuropeanCall, 100.0, 4);
        let states = compute_state_table(&product, &q, ForkInitializer::Reject).unwrap();
        let cf = compute_cashflows(&product, &q, &states).unwrap();
        let v = accumulate_remaining_value(&cf, &DiscountModel::flat(0.03), DiscountBase::ValuationTime);
        let s = build_sample_set(&q, &states, &v, q.grid().times(), None).unwrap();
        for pr in s.provenance() {
            prop_assert!(pr.time_index >= act[pr.scenario]);
            prop_assert!(!pr.synthetic);
        }
        let active: usize = act.iter().map(|a| 5 - a).sum();
        prop_assert_eq!(s.len(), active);
        for ti in 0..5 {
            for w in 0..p.len() {
                prop_assert_eq!(q.get(ti, w).is_some(), ti >= act[w]);
                prop_assert_eq!(v.get(ti, w).is_some(), ti >= act[w]);
            }
        }
        Ok(())
    })
}

pub fn gbm_structure() -> Result<(), String> {
    let strat = (any::<u64>(), 1usize..20, 0.01f64..1.5, -0.1f64..0.1, 0usize..3, 1usize..4);
    run(strat, |(seed, n, vol, drift, fork_t, count)| {
        let grid = TimeGrid::new(vec![0.0, 0.25, 1.0, 2.0]).unwrap();
        let params = GbmParams::single(100.0, drift, vol, seed);
        let a = generate_gbm_fixed(&params, &grid, n).unwrap();
        let b = generate_gbm_fixed(&params, &grid, n).unwrap();
        prop_assert_eq!(&a, &b);
        for ti in 0..4 {
            for w in 0..n {
                let x = a.value(ti, w, 0).unwrap();
                prop_assert!(x > 0.0 && x.is_finite());
            }
        }
        let p_grid = TimeGrid::new(vec![0.0, 0.25, 1.0]).unwrap();
        let physical = generate_gbm_fixed(&GbmParams::single(100.0, 0.05, 0.3, seed ^ 1), &p_grid, 3).unwrap();
        let physical = relabel_physical(&physical);
        let forks = [ForkSpec {
            physical_scenario: 1,
            time_index: fork_t,
            count,
        }];
        let f = generate_gbm_forked(&params, &grid, &physical, &forks).unwrap();
        for w in 0..count {
            prop_assert_eq!(f.activation(w), fork_t);
            if fork_t > 0 {
                prop_assert!(f.get(fork_t - 1, w).is_none());
            }
            let q0 = f.value(fork_t, w, 0).unwrap();
            let p0 = physical.value(fork_t, 1, 0).unwrap();
            prop_assert_eq!(q0.to_bits(), p0.to_bits());
        }
        Ok(())
    })
}

pub fn asian_recurrence() -> Result<(), String> {
    run(paths(7, 4), |p| {
        let q = dense(ScenarioKind::RiskNeutral, (0..7).map(f64::from).collect(), &p, vec![0; p.len()]);
        let product = ProductSpec::new(ProductKind::AsianCall, 100.0, 6);
        let states = compute_state_table(&product, &q, ForkInitializer::Reject).unwrap();
        for (w, path) in p.iter().enumerate() {
            for ti in 0..7 {
                let mean = path[..=ti].iter().sum::<f64>() / (ti + 1) as f64;
                let a = states.get(ti, w).unwrap()[0];
                prop_assert!(rel_close(a, mean, 1e-12), "{} vs {}", a, mean);
                let sum: f64 = path[..=ti].iter().sum();
                prop_assert!(rel_close((ti + 1) as f64 * a, sum, 1e-12));
            }
        }
        Ok(())
    })
}

pub fn barrier_and_payoffs() -> Result<(), String> {
    let strat = (paths(6, 4), 50.0f64..250.0, 1.0f64..200.0);
    run(strat, |(p, barrier, strike)| {
        let q = dense(ScenarioKind::RiskNeutral, (0..6).map(f64::from).collect(), &p, vec![0; p.len()]);
        let knock = ProductSpec::barrier(strike, barrier, 5);
        let states = compute_state_table(&knock, &q, ForkInitializer::Reject).unwrap();
        for w in 0..p.len() {
            for ti in 1..6 {
                let before = states.get(ti - 1, w).unwrap()[0];
                let after = states.get(ti, w).unwrap()[0];
                prop_assert!(!(before == 0.0 && after == 1.0));
            }
        }
        for kind in [
            ProductKind::EuropeanCall,
            ProductKind::EuropeanPut,
            ProductKind::AsianCall,
            ProductKind::AsianPut,
        ] {
            let product = ProductSpec::new(kind, strike, 4);
            let st = compute_state_table(&product, &q, ForkInitializer::Reject).unwrap();
            let cf = compute_cashflows(&product, &q, &st).unwrap();
            for w in 0..p.len() {
                for ti in 0..6 {
                    let c = cf.get(ti, w).unwrap();
                    prop_assert!(c >= 0.0);
                    if ti != 4 {
                        prop_assert_eq!(c, 0.0);
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn fork_copy_exactness() -> Result<(), String> {
    let strat = (any::<u64>(), 0usize..3, 0usize..4);
    run(strat, |(seed, fork_t, scenario)| {
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let p_grid = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let physical = generate_gbm_fixed(&GbmParams::single(100.0, 0.05, 0.3, seed), &p_grid, 4).unwrap();
        let physical = relabel_physical(&physical);
        let forks = [ForkSpec {
            physical_scenario: scenario,
            time_index: fork_t,
            count: 2,
        }];
        let q = generate_gbm_forked(&GbmParams::single(100.0, 0.0, 0.2, seed ^ 7), &grid, &physical, &forks).unwrap();
        let product = ProductSpec::new(ProductKind::AsianCall, 100.0, 3);
        let ap = compute_state_table(&product, &physical, ForkInitializer::Reject).unwrap();
        let aq = compute_state_table(&product, &q, ForkInitializer::CopyPhysical { physical: &physical, states: &ap })
            .unwrap();
        for w in 0..2 {
            let copied = aq.get(fork_t, w).unwrap()[0];
            prop_assert_eq!(copied.to_bits(), ap.get(fork_t, scenario).unwrap()[0].to_bits());
            for ti in 0..4 {
                prop_assert_eq!(aq.get(ti, w).is_some(), ti >= fork_t);
            }
        }
        Ok(())
    })
}

fn relabel_physical(set: &ScenarioSet<f64>) -> ScenarioSet<f64> {
    let n_t = set.grid().len();
    let paths: Vec<Vec<f64>> = (0..set.n_scenarios())
        .map(|w| (0..n_t).map(|ti| set.value(ti, w, 0).unwrap()).collect())
        .collect();
    dense(ScenarioKind::Physical, set.grid().times().to_vec(), &paths, vec![0; paths.len()])
}

pub fn discount_identity() -> Result<(), String> {
    let strat = (-0.2f64..0.3, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0);
    run(strat, |(r, a, b, c)| {
        let mut t = [a, b, c];
        t.sort_by(f64::total_cmp);
        let m = DiscountModel::flat(r);
        prop_assert_eq!(discount_factor(&m, t[0], t[0]).unwrap(), 1.0);
        let lhs = discount_factor(&m, t[0], t[1]).unwrap() * discount_factor(&m, t[1], t[2]).unwrap();
        let rhs = discount_factor(&m, t[0], t[2]).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-12));
        if t[0] < t[2] {
            prop_assert!(discount_factor(&m, t[2], t[0]).is_err());
        }
        Ok(())
    })
}

fn random_cashflows() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, Vec<usize>, f64)> {
    (2usize..6, 1usize..4)
        .prop_flat_map(|(n_t, n)| {
            (
                prop::collection::vec(0.01f64..1.0, n_t),
                prop::collection::vec(prop::collection::vec(-5.0f64..50.0, n_t), n),
                prop::collection::vec(0usize..n_t, n),
                -0.1f64..0.2,
            )
        })
        .prop_map(|(steps, flows, act, r)| {
            let mut t = 0.0;
            let times = steps
                .iter()
                .enumerate()
                .map(|(i, dt)| {
                    if i > 0 {
                        t += dt;
                    }
                    t
                })
                .collect();
            (times, flows, act, r)
        })
}

fn cashflow_table(times: &[f64], flows: &[Vec<f64>], act: &[usize]) -> CashFlowTable<f64> {
    let n = flows.len();
    let mut values = Vec::new();
    for ti in 0..times.len() {
        values.extend(flows.iter().enumerate().map(|(w, f)| if ti >= act[w] { f[ti] } else { 0.0 }));
    }
    CashFlowTable::from_dense(TimeGrid::new(times.to_vec()).unwrap(), n, values, act.to_vec()).unwrap()
}

pub fn backward_recursion() -> Result<(), String> {
    run(random_cashflows(), |(times, flows, act, r)| {
        let cf = cashflow_table(&times, &flows, &act);
        let m = DiscountModel::flat(r);
        let v = accumulate_remaining_value(&cf, &m, DiscountBase::ValuationTime);
        let n_t = times.len();
        for w in 0..flows.len() {
            prop_assert_eq!(v.get(n_t - 1, w).unwrap(), cf.get(n_t - 1, w).unwrap());
            for ti in act[w]..n_t - 1 {
                let d = discount_factor(&m, times[ti], times[ti + 1]).unwrap();
                let expect = cf.get(ti, w).unwrap() + d * v.get(ti + 1, w).unwrap();
                prop_assert!(rel_close(v.get(ti, w).unwrap(), expect, 1e-12));
            }
        }
        Ok(())
    })
}

pub fn zero_rate_bases() -> Result<(), String> {
    run(random_cashflows(), |(times, flows, act, _)| {
        let cf = cashflow_table(&times, &flows, &act);
        let m = DiscountModel::flat(0.0);
        let a = accumulate_remaining_value(&cf, &m, DiscountBase::ValuationTime);
        let b = accumulate_remaining_value(&cf, &m, DiscountBase::InitialTime);
        for w in 0..flows.len() {
            for ti in 0..times.len() {
                prop_assert_eq!(a.get(ti, w), b.get(ti, w));
            }
        }
        Ok(())
    })
}

fn samples_2d(points: &[(f64, f64, f64)]) -> SampleSet<f64> {
    let mut s = SampleSet::new(1, 1);
    for (i, &(x, a, y)) in points.iter().enumerate() {
        let p = Provenance {
            scenario: i,
            time_index: 0,
            synthetic: false,
        };
        s.push(0.0, &[x], &[a], y, p);
    }
    s
}

fn design(points: &[(f64, f64, f64)], basis: &BasisSpec) -> Vec<Vec<f64>> {
    let ex = basis.exponents(2);
    points
        .iter()
        .map(|&(x, a, _)| ex.iter().map(|e| x.powi(e[0] as i32) * a.powi(e[1] as i32)).collect())
        .collect()
}

fn points(min: usize, max: usize) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.5f64..2.0, 0.5f64..2.0, -10.0f64..10.0), min..max)
}

pub fn residual_orthogonality() -> Result<(), String> {
    run(points(8, 40), |pts| {
        let basis = BasisSpec::quadratic();
        let fit = fit_polynomial(&samples_2d(&pts), &basis, FitOptions::default()).unwrap();
        if fit.rank < basis.size(2) {
            return Ok(());
        }
        let rows = design(&pts, &basis);
        let r: Vec<f64> = rows
            .iter()
            .zip(&pts)
            .map(|(b, p)| b.iter().zip(&fit.coefficients).map(|(x, c)| x * c).sum::<f64>() - p.2)
            .collect();
        let ynorm = pts.iter().map(|p| p.2 * p.2).sum::<f64>().sqrt();
        for k in 0..basis.size(2) {
            let col: Vec<f64> = rows.iter().map(|b| b[k]).collect();
            let cn = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
            prop_assert!(dot.abs() <= 1e-8 * cn * ynorm.max(1.0), "column {}: {}", k, dot);
        }
        Ok(())
    })
}

pub fn minimal_norm() -> Result<(), String> {
    let strat = (
        prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 4..20),
        -5.0f64..5.0,
    );
    run(strat, |(rows, s)| {
        // third column = first + second, null space spanned by (1, 1, -1)
        let m: Vec<Vec<f64>> = rows.iter().map(|&(a, b, _)| vec![a, b, a + b]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let a = ColMatrix::from_rows(&m).unwrap();
        let sol = lstsq_min_norm(&a, &y).unwrap();
        prop_assume!(sol.rank == 2);
        let c = &sol.coefficients;
        let null = [1.0, 1.0, -1.0];
        let dot: f64 = c.iter().zip(&null).map(|(a, b)| a * b).sum();
        let cn: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(dot.abs() <= 1e-9 * cn.max(1.0));
        let other: Vec<f64> = c.iter().zip(&null).map(|(a, b)| a + s * b).collect();
        let on: f64 = other.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(cn <= on + 1e-12);
        // both solve the same least-squares problem
        let fa = a.mul_vec(c);
        let fb = a.mul_vec(&other);
        for (u, v) in fa.iter().zip(&fb) {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
        Ok(())
    })
}

pub fn exact_reproduction() -> Result<(), String> {
    let strat = (prop::collection::vec(-3.0f64..3.0, 6), points(6, 30));
    run(strat, |(coef, pts)| {
        let basis = BasisSpec::quadratic();
        let rows = design(&pts, &basis);
        let pts: Vec<(f64, f64, f64)> = pts
            .iter()
            .zip(&rows)
            .map(|(&(x, a, _), b)| (x, a, b.iter().zip(&coef).map(|(u, c)| u * c).sum()))
            .collect();
        let fit = fit_polynomial(&samples_2d(&pts), &basis, FitOptions::default()).unwrap();
        prop_assume!(fit.rank == 6 && fit.condition.is_some_and(|c| c < 1e6));
        for &(x, a, y) in &pts {
            prop_assert!(rel_close(fit.predict(&[x, a]), y, 1e-9));
        }
        Ok(())
    })
}

pub fn permutation_invariance() -> Result<(), String> {
    let strat = points(8, 30).prop_flat_map(|p| {
        let n = p.len();
        (Just(p), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
    });
    run(strat, |(pts, perm)| {
        let basis = BasisSpec::quadratic();
        let s = samples_2d(&pts);
        let a = fit_polynomial(&s, &basis, FitOptions::default()).unwrap();
        let b = fit_polynomial(&s.permuted(&perm), &basis, FitOptions::default()).unwrap();
        prop_assume!(a.condition.is_some_and(|c| c < 1e6));
        let scale = a.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((u - v).abs() <= 1e-9 * scale.max(1.0), "{} vs {}", u, v);
        }
        Ok(())
    })
}

pub fn kernel_range() -> Result<(), String> {
    let strat = (points(1, 30), (0.0f64..3.0, 0.0f64..3.0), prop::option::of(0.01f64..5.0));
    run(strat, |(pts, (qx, qa), h)| {
        let bw = h.map_or(Bandwidth::Auto, Bandwidth::Fixed);
        let k = fit_kernel(&samples_2d(&pts), bw, false).unwrap();
        let (v, _) = k.predict(&[qx, qa]);
        let lo = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 * lo.abs().max(1.0) && v <= hi + 1e-12 * hi.abs().max(1.0));
        Ok(())
    })
}

pub fn black_scholes_shape() -> Result<(), String> {
    let strat = (20.0f64..200.0, 20.0f64..200.0, -0.05f64..0.1, 0.05f64..0.8, 0.05f64..5.0, 1.001f64..1.5);
    run(strat, |(s, k, r, v, t, bump)| {
        let c = black_scholes_call(s, k, r, v, t).unwrap();
        let p = black_scholes_put(s, k, r, v, t).unwrap();
        prop_assert!((c - p - (s - k * (-r * t).exp())).abs() <= 1e-10 * s.max(k));
        prop_assert!(black_scholes_call(s * bump, k, r, v, t).unwrap() >= c);
        prop_assert!(black_scholes_call(s, k, r, v * bump, t).unwrap() >= c);
        Ok(())
    })
}

fn losses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 1..60)
}

pub fn var_translation_homogeneity() -> Result<(), String> {
    let strat = (losses(), -50.0f64..50.0, 0.01f64..10.0, 0.01f64..0.99);
    run(strat, |(l, c, lambda, level)| {
        let d = PnlDistribution::from_losses(l.clone()).unwrap();
        let shifted = PnlDistribution::from_losses(l.iter().map(|x| x + c).collect()).unwrap();
        let scaled = PnlDistribution::from_losses(l.iter().map(|x| x * lambda).collect()).unwrap();
        let var = value_at_risk(&d, level).unwrap();
        let cvar = conditional_value_at_risk(&d, level).unwrap();
        let tol = 1e-9 * (1.0 + var.abs() + cvar.abs() + c.abs());
        prop_assert!((value_at_risk(&shifted, level).unwrap() - (var + c)).abs() <= tol);
        prop_assert!((conditional_value_at_risk(&shifted, level).unwrap() - (cvar + c)).abs() <= tol);
        let tol = 1e-9 * (1.0 + var.abs() + cvar.abs()) * lambda.max(1.0);
        prop_assert!((value_at_risk(&scaled, level).unwrap() - lambda * var).abs() <= tol);
        prop_assert!((conditional_value_at_risk(&scaled, level).unwrap() - lambda * cvar).abs() <= tol);
        if l.len() > 1 {
            let sd = std_dev(&d).unwrap();
            prop_assert!((std_dev(&shifted).unwrap() - sd).abs() <= 1e-9 * (1.0 + sd + c.abs()));
        }
        Ok(())
    })
}

pub fn cvar_dominates_var() -> Result<(), String> {
    let strat = (losses(), 0.01f64..0.99, 0.01f64..0.99);
    run(strat, |(l, a, b)| {
        let d = PnlDistribution::from_losses(l).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for level in [lo, hi] {
            prop_assert!(conditional_value_at_risk(&d, level).unwrap() >= value_at_risk(&d, level).unwrap());
        }
        prop_assert!(value_at_risk(&d, hi).unwrap() >= value_at_risk(&d, lo).unwrap());
        Ok(())
    })
}

/// Minimal-norm predictions on the rank-deficient Asian samples equal those of
/// the reduced basis `{1, Q, Q²}` at queries on the sample line `A = (100 + Q) / 2`.
pub fn asian_prediction_uniqueness() -> Result<(), String> {
    let p = wx::physical();
    let q = wx::with_forks();
    let product = wx::asian_call();
    let ap = compute_state_table(&product, &p, ForkInitializer::Reject).map_err(|e| e.to_string())?;
    let aq = compute_state_table(&product, &q, ForkInitializer::CopyPhysical { physical: &p, states: &ap })
        .map_err(|e| e.to_string())?;
    let cf = compute_cashflows(&product, &q, &aq).map_err(|e| e.to_string())?;
    let v = accumulate_remaining_value(&cf, &DiscountModel::flat(0.0), DiscountBase::ValuationTime);
    let s = build_sample_set(&q, &aq, &v, &[1.0], None).map_err(|e| e.to_string())?;
    let full = fit_polynomial(&s, &BasisSpec::quadratic(), FitOptions::default()).map_err(|e| e.to_string())?;
    if full.rank != 3 {
        return Err(format!("expected rank 3, got {}", full.rank));
    }
    let mut reduced = SampleSet::new(1, 0);
    for i in 0..s.len() {
        reduced.push(1.0, s.risk_factors(i), &[], s.y()[i], s.provenance()[i]);
    }
    let small = fit_polynomial(&reduced, &BasisSpec::quadratic(), FitOptions::default()).map_err(|e| e.to_string())?;
    for x in [90.0, 100.0, 110.0, 150.0] {
        let a = full.predict(&[x, (100.0 + x) / 2.0]);
        let b = small.predict(&[x]);
        if !rel_close(a, b, 1e-8) {
            return Err(format!("prediction at {x}: {a} vs {b}"));
        }
    }
    Ok(())
}

/// Log-increment moments of 10⁵ fixed-start paths at 4 standard errors.
pub fn gbm_moments() -> Result<(), String> {
    let (mu, sigma, dt, n): (f64, f64, f64, usize) = (0.07, 0.3, 0.5, 100_000);
    let grid = TimeGrid::new(vec![0.0, dt]).unwrap();
    let set = generate_gbm_fixed(&GbmParams::single(100.0, mu, sigma, 12345), &grid, n).map_err(|e| e.to_string())?;
    let inc: Vec<f64> = (0..n).map(|w| (set.value(1, w, 0).unwrap() / 100.0).ln()).collect();
    let mean = inc.iter().sum::<f64>() / n as f64;
    let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let m_true = (mu - 0.5 * sigma * sigma) * dt;
    let v_true = sigma * sigma * dt;
    let se_mean = (v_true / n as f64).sqrt();
    let se_var = v_true * (2.0 / (n - 1) as f64).sqrt();
    if (mean - m_true).abs() > 4.0 * se_mean {
        return Err(format!("mean {mean} vs {m_true}"));
    }
    if (var - v_true).abs() > 4.0 * se_var {
        return Err(format!("variance {var} vs {v_true}"));
    }
    Ok(())
}

/// Nested MC standard error at `n` over `4n` inner paths, over several seeds.
pub fn nested_se_scaling() -> Result<(), String> {
    let grid = TimeGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
    let product = ProductSpec::new(ProductKind::AsianCall, 100.0, 2);
    let params = GbmParams::single(100.0, 0.02, 0.25, 0);
    let disc = DiscountModel::flat(0.02);
    for seed in 0..5u64 {
        let est = |n| {
            nested_mc_price(&grid, 0, &[100.0], &[100.0], &product, &params, &NestedMcConfig { inner_paths: n, seed }, &disc)
                .map_err(|e| e.to_string())
        };
        let ratio = est(4_000)?.std_error / est(16_000)?.std_error;
        if !(1.8..=2.2).contains(&ratio) {
            return Err(format!("seed {seed}: ratio {ratio}"));
        }
    }
    Ok(())
}

//! Smoothing pipeline versus brute-force nested Monte Carlo on the same
//! physical scenarios, for a European call under GBM.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, parse_json};
use crate::engine::{price_scenarios, relabel, PricingSpec};
use crate::error::{Error, Result};
use crate::oracle::{nested_mc_price, NestedMcConfig, NORMAL_CDF_METHOD};
use crate::product::{ProductKind, ProductSpec};
use crate::scenario::{generate_gbm_fixed, GbmParams, ScenarioKind, TimeGrid};
use crate::smoothing::{BasisSpec, FitConfig};
use crate::valuation::DiscountModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub n_physical: usize,
    /// Physical times `0, dt, …, (steps − 1)·dt`.
    pub physical_steps: usize,
    pub physical_dt: f64,
    pub physical_drift: f64,
    pub physical_volatility: f64,
    pub initial_value: f64,
    pub n_risk_neutral: usize,
    pub inner_paths: usize,
    pub rate: f64,
    pub volatility: f64,
    pub strike: f64,
    pub maturity: f64,
    pub degree: u32,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    /// Desk scale: 1000 scenarios × 10 steps, 10 000 risk-neutral and inner paths.
    fn default() -> Self {
        Self {
            n_physical: 1000,
            physical_steps: 10,
            physical_dt: 0.1,
            physical_drift: 0.06,
            physical_volatility: 0.25,
            initial_value: 100.0,
            n_risk_neutral: 10_000,
            inner_paths: 10_000,
            rate: 0.02,
            volatility: 0.2,
            strike: 100.0,
            maturity: 2.0,
            degree: 4,
            standardize: true,
            seed: 20_240_601,
        }
    }
}

#[derive(Deserialize)]
struct Document {
    #[serde(default)]
    benchmark: BenchmarkConfig,
}

impl BenchmarkConfig {
    /// The `benchmark` section of a config document; defaults when absent.
    /// Other sections are ignored.
    pub fn from_document(text: &str) -> Result<Self> {
        let doc: Document = parse_json(text)?;
        doc.benchmark.validate()?;
        Ok(doc.benchmark)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("benchmark.{field}"), format!("must be > 0, got {v}")))
            }
        };
        for (field, n) in [
            ("n_physical", self.n_physical),
            ("physical_steps", self.physical_steps),
            ("n_risk_neutral", self.n_risk_neutral),
            ("inner_paths", self.inner_paths),
        ] {
            if n == 0 {
                return Err(Error::config(format!("benchmark.{field}"), "must be at least 1"));
            }
        }
        positive("physical_dt", self.physical_dt)?;
        positive("initial_value", self.initial_value)?;
        positive("volatility", self.volatility)?;
        positive("strike", self.strike)?;
        if !(self.physical_volatility >= 0.0) {
            return Err(Error::config("benchmark.physical_volatility", "must be >= 0"));
        }
        let last = (self.physical_steps - 1) as f64 * self.physical_dt;
        if !(self.maturity > last) {
            return Err(Error::config(
                "benchmark.maturity",
                format!("must exceed the last physical time {last}"),
            ));
        }
        Ok(())
    }

    fn physical_grid(&self) -> Result<TimeGrid<f64>> {
        TimeGrid::new((0..self.physical_steps).map(|k| k as f64 * self.physical_dt).collect())
    }

    fn risk_neutral_grid(&self) -> Result<TimeGrid<f64>> {
        let mut times = self.physical_grid()?.times().to_vec();
        times.push(self.maturity);
        TimeGrid::new(times)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub n_physical: usize,
    pub physical_steps: usize,
    pub n_risk_neutral: usize,
    pub inner_paths: usize,
    pub cells: usize,
    pub pipeline_seconds: f64,
    pub nested_seconds: f64,
    pub speedup: f64,
    /// GBM transitions simulated by the pipeline.
    pub pipeline_path_steps: u64,
    /// GBM transitions simulated by nested Monte Carlo.
    pub nested_path_steps: u64,
    pub operation_ratio: f64,
    pub max_abs_deviation: f64,
    /// Share of cells with `|pipeline − nested| ≤ 3` combined standard errors.
    pub within_3se: f64,
    pub normal_cdf_method: &'static str,
    pub flags: Vec<String>,
}

/// Runs both methods on one set of physical scenarios.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let p_grid = config.physical_grid()?;
    let q_grid = config.risk_neutral_grid()?;
    let maturity_index = q_grid.len() - 1;
    let product = ProductSpec::new(ProductKind::EuropeanCall, config.strike, maturity_index);
    let discount = DiscountModel::flat(config.rate);
    let physical_params = GbmParams::single(
        config.initial_value,
        config.physical_drift,
        config.physical_volatility,
        derive_seed(config.seed, 1),
    );
    let physical = generate_gbm_fixed(&physical_params, &p_grid, config.n_physical)?;
    let physical = relabel(physical, ScenarioKind::Physical)?;
    let q_params = GbmParams::single(config.initial_value, config.rate, config.volatility, config.seed);

    let start = Instant::now();
    let risk_neutral = generate_gbm_fixed(&q_params, &q_grid, config.n_risk_neutral)?;
    let fit = FitConfig {
        standardize: config.standardize,
        ..FitConfig::polynomial(BasisSpec::new(config.degree, true))
    };
    let mut run = price_scenarios(physical, risk_neutral, &PricingSpec::new(product.clone(), discount, fit))?;
    let pipeline_seconds = start.elapsed().as_secs_f64();
    run.counts.simulated_steps = (config.n_risk_neutral * (q_grid.len() - 1)) as u64;

    let cells: Vec<(usize, usize)> = (0..p_grid.len())
        .flat_map(|ti| (0..config.n_physical).map(move |w| (ti, w)))
        .collect();
    let nested_seed = derive_seed(config.seed, 2);
    let start = Instant::now();
    let nested = cells
        .par_iter()
        .map(|&(ti, w)| {
            let x = run.physical.get(ti, w).expect("physical cell");
            let mc = NestedMcConfig {
                inner_paths: config.inner_paths,
                seed: derive_seed(nested_seed, (ti * config.n_physical + w) as u64 + 3),
            };
            nested_mc_price(&q_grid, ti, x, &[], &product, &q_params, &mc, &discount)
        })
        .collect::<Result<Vec<_>>>()?;
    let nested_seconds = start.elapsed().as_secs_f64();

    let mut max_abs_deviation = 0.0f64;
    let mut within = 0usize;
    for (&(ti, w), est) in cells.iter().zip(&nested) {
        let smooth = run.prices.get(ti, w);
        let se = run.prices.std_error(ti, w).unwrap_or(0.0);
        let dev = (smooth - est.price).abs();
        max_abs_deviation = max_abs_deviation.max(dev);
        let combined = (se * se + est.std_error * est.std_error).sqrt();
        if dev <= 3.0 * combined || dev == 0.0 {
            within += 1;
        }
    }
    let nested_path_steps: u64 = nested.iter().map(|e| e.path_steps).sum();
    let pipeline_path_steps = run.counts.simulated_steps;
    let within_3se = within as f64 / cells.len() as f64;
    let speedup = nested_seconds / pipeline_seconds.max(1e-9);

    let mut flags = Vec::new();
    if config.inner_paths < 100 {
        flags.push(format!(
            "inner_paths = {}: nested estimates are high-variance, deviations are dominated by nested noise",
            config.inner_paths
        ));
    }
    if config.n_physical * config.physical_steps < 100 {
        flags.push("few physical cells: the pipeline's fixed cost is not amortized".into());
    }
    if within_3se < 0.95 {
        flags.push(format!("only {:.1}% of cells agree within 3 standard errors", 100.0 * within_3se));
    }
    if run.prices.metadata.extrapolated_cells > 0 {
        flags.push(format!(
            "{} cells lie outside the fitted sample range",
            run.prices.metadata.extrapolated_cells
        ));
    }

    Ok(BenchmarkReport {
        n_physical: config.n_physical,
        physical_steps: config.physical_steps,
        n_risk_neutral: config.n_risk_neutral,
        inner_paths: config.inner_paths,
        cells: cells.len(),
        pipeline_seconds,
        nested_seconds,
        speedup,
        pipeline_path_steps,
        nested_path_steps,
        operation_ratio: nested_path_steps as f64 / pipeline_path_steps.max(1) as f64,
        max_abs_deviation,
        within_3se,
        normal_cdf_method: NORMAL_CDF_METHOD,
        flags,
    })
}

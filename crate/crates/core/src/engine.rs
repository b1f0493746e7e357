//! The pricing pipeline: import `P`, generate `Q`, path states `A_p` and
//! `A_q`, remaining values `V_q`, fit `F`, evaluate `V_p`. Also the price table
//! and run persistence.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ForkInitMode, ForkRequest, PhysicalSource, PipelineConfig, RiskNeutralMode};
use crate::error::{Error, Result, Stage};
use crate::io::{read_to_string, write_atomic};
use crate::product::{compute_cashflows, compute_state_table, ForkInitializer, PathStateTable, ProductSpec};
use crate::risk::{risk_report, PnlDistribution, RiskReport};
use crate::scenario::{
    generate_gbm_dispersed, generate_gbm_fixed, generate_gbm_forked, import_physical, import_physical_csv,
    import_physical_json, import_risk_neutral_csv, validate_alignment_until, write_scenarios_csv, AlignmentReport,
    ForkOrigin, ForkSpec, GbmParams, ScenarioKind, ScenarioRow, ScenarioSet, TimeGrid,
};
use crate::smoothing::{fit, FitConfig, FitDiagnostics, Smoother, SyntheticHistory};
use crate::valuation::{accumulate_remaining_value, DiscountBase, DiscountModel, ValueTable};

pub const RUN_FORMAT_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "smoothprice";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything after scenario generation: product, discounting, and smoother.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingSpec {
    pub product: ProductSpec<f64>,
    pub discount: DiscountModel<f64>,
    #[serde(default)]
    pub discount_base: DiscountBase,
    pub fit: FitConfig<f64>,
    #[serde(default)]
    pub synthetic_history: bool,
    #[serde(default)]
    pub fork_initializer: ForkInitMode,
    /// Risk-neutral times to fit; default: physical times before maturity.
    #[serde(default)]
    pub fit_times: Option<Vec<f64>>,
}

impl PricingSpec {
    pub fn new(product: ProductSpec<f64>, discount: DiscountModel<f64>, fit: FitConfig<f64>) -> Self {
        Self {
            product,
            discount,
            discount_base: DiscountBase::ValuationTime,
            fit,
            synthetic_history: false,
            fork_initializer: ForkInitMode::CopyPhysical,
            fit_times: None,
        }
    }

    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            product: config.product.clone(),
            discount: config.discount.model,
            discount_base: config.discount.base,
            fit: config.smoother.fit.clone(),
            synthetic_history: config.smoother.synthetic_history,
            fork_initializer: config.fork_initializer,
            fit_times: config.fit_times.clone(),
        }
    }
}

/// Work done by a run, counted rather than timed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationCounts {
    /// GBM transitions simulated for `Q`.
    pub simulated_steps: u64,
    /// Path-state updates over `P` and `Q`.
    pub state_updates: u64,
    pub samples: u64,
    /// Smoother evaluations at physical cells.
    pub evaluations: u64,
    /// Evaluations times basis size (kernel: times retained samples).
    pub evaluation_terms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub millis: f64,
}

#[derive(Debug, Default)]
struct Stopwatch {
    entries: Vec<StageTiming>,
}

impl Stopwatch {
    fn run<R>(&mut self, stage: Stage, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = Instant::now();
        let out = f().map_err(|e| e.at(stage));
        self.entries.push(StageTiming {
            stage: stage.to_string(),
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }
}

/// Audit data attached to every price table.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PriceMetadata {
    pub config_digest: Option<String>,
    pub seed: Option<u64>,
    /// Physical time indices after maturity, priced as 0.
    pub post_maturity: Vec<usize>,
    pub fit_diagnostics: Vec<FitDiagnostics<f64>>,
    pub extrapolated_cells: usize,
    pub fallback_cells: usize,
}

/// `V_p(t, ω)` for every physical time and scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceTable {
    pub times: Vec<f64>,
    pub n_scenarios: usize,
    /// `(time, scenario)` row-major.
    pub prices: Vec<f64>,
    pub std_errors: Vec<Option<f64>>,
    pub extrapolated: Vec<bool>,
    pub metadata: PriceMetadata,
}

impl PriceTable {
    pub fn get(&self, time_index: usize, scenario: usize) -> f64 {
        self.prices[time_index * self.n_scenarios + scenario]
    }

    pub fn std_error(&self, time_index: usize, scenario: usize) -> Option<f64> {
        self.std_errors[time_index * self.n_scenarios + scenario]
    }

    pub fn row(&self, time_index: usize) -> &[f64] {
        &self.prices[time_index * self.n_scenarios..(time_index + 1) * self.n_scenarios]
    }

    /// True when every price matches `other` bit for bit.
    pub fn bitwise_eq(&self, other: &PriceTable) -> bool {
        self.times.len() == other.times.len()
            && self.n_scenarios == other.n_scenarios
            && self.prices.len() == other.prices.len()
            && self.prices.iter().zip(&other.prices).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// `scenario,time_index,price` with 1-based scenario ids and six decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "time_index", "price"])?;
        for ti in 0..self.times.len() {
            for s in 0..self.n_scenarios {
                w.write_record(&[(s + 1).to_string(), ti.to_string(), format!("{:.6}", self.get(ti, s))])?;
            }
        }
        w.flush().map_err(|e| Error::io("<price table>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

/// Reads a `scenario,time_index,price` table into prices per time index,
/// ordered by scenario. Every time index must list the same scenarios
/// `1..=n` exactly once.
pub fn read_price_csv<R: Read>(reader: R) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::trim).map(String::from).collect();
    if header != ["scenario", "time_index", "price"] {
        return Err(Error::MalformedScenarioData(format!(
            "price table header must be scenario,time_index,price, got {}",
            header.join(",")
        )));
    }
    let mut cells: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::MalformedScenarioData(format!("price table row {}: {what}", line + 2));
        if rec.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let scenario: usize = rec[0].trim().parse().map_err(|_| bad("bad scenario id"))?;
        let ti: usize = rec[1].trim().parse().map_err(|_| bad("bad time index"))?;
        let price: f64 = rec[2].trim().parse().map_err(|_| bad("bad price"))?;
        if scenario == 0 {
            return Err(bad("scenario ids are 1-based"));
        }
        if !price.is_finite() {
            return Err(bad("non-finite price"));
        }
        if cells.entry(ti).or_default().insert(scenario, price).is_some() {
            return Err(bad("duplicate row"));
        }
    }
    if cells.is_empty() {
        return Err(Error::MalformedScenarioData("price table has no rows".into()));
    }
    let n = cells.values().next().map(BTreeMap::len).unwrap_or(0);
    let mut out = BTreeMap::new();
    for (ti, row) in cells {
        if row.len() != n || row.keys().copied().ne(1..=n) {
            return Err(Error::MalformedScenarioData(format!(
                "time index {ti} does not list scenarios 1..={n} exactly once"
            )));
        }
        out.insert(ti, row.into_values().collect());
    }
    Ok(out)
}

/// Risk report per time index. Losses are `base − price`; `base` defaults to
/// the mean price at the earliest time index.
pub fn risk_reports(prices: &BTreeMap<usize, Vec<f64>>, level: f64, base: Option<f64>) -> Result<Vec<RiskReport>> {
    let base = match base {
        Some(b) => b,
        None => {
            let first = prices.values().next().ok_or(Error::EmptyDistribution)?;
            first.iter().sum::<f64>() / first.len() as f64
        }
    };
    prices
        .iter()
        .map(|(&ti, row)| risk_report(&PnlDistribution::from_prices(base, row, ti)?, level))
        .collect()
}

/// Result of one pipeline run with every intermediate table.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub spec: PricingSpec,
    pub physical: ScenarioSet<f64>,
    pub risk_neutral: ScenarioSet<f64>,
    pub physical_states: PathStateTable<f64>,
    pub risk_neutral_states: PathStateTable<f64>,
    pub values: ValueTable<f64>,
    pub smoother: Smoother<f64>,
    pub prices: PriceTable,
    pub alignment: AlignmentReport<f64>,
    pub fit_times: Vec<f64>,
    pub counts: OperationCounts,
    pub timings: Vec<StageTiming>,
}

/// Step 1.
pub fn load_physical(config: &PipelineConfig) -> Result<ScenarioSet<f64>> {
    match &config.physical {
        PhysicalSource::Csv { path, grid } => {
            let p = config.resolve(path);
            let f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
            import_physical_csv(f, grid.clone().validated()?)
        }
        PhysicalSource::Json { path } => import_physical_json(&read_to_string(&config.resolve(path))?),
        PhysicalSource::Inline { grid, scenarios } => {
            let rows = inline_rows(scenarios.iter().map(|p| p.iter().map(|c| Some(c.clone())).collect()));
            import_physical(grid.clone().validated()?, &rows)
        }
        PhysicalSource::Gbm { grid, n_scenarios, .. } => {
            let params = config.physical_gbm().expect("gbm source");
            let set = generate_gbm_fixed(&params, &grid.clone().validated()?, *n_scenarios)?;
            relabel(set, ScenarioKind::Physical)
        }
    }
}

fn inline_rows(paths: impl Iterator<Item = Vec<Option<Vec<f64>>>>) -> Vec<ScenarioRow<f64>> {
    let mut rows = Vec::new();
    for (w, path) in paths.enumerate() {
        for (ti, cell) in path.into_iter().enumerate() {
            if let Some(values) = cell {
                rows.push(ScenarioRow {
                    scenario: w + 1,
                    time_index: ti,
                    values: values.into_iter().map(Some).collect(),
                });
            }
        }
    }
    rows
}

/// Copies a set under another kind, dropping fork metadata.
pub fn relabel(set: ScenarioSet<f64>, kind: ScenarioKind) -> Result<ScenarioSet<f64>> {
    let grid = set.grid().clone();
    let (n, s) = (set.n_scenarios(), set.n_factors());
    let mut values = vec![0.0; grid.len() * n * s];
    for ti in 0..grid.len() {
        for w in 0..n {
            if let Some(x) = set.get(ti, w) {
                values[(ti * n + w) * s..(ti * n + w + 1) * s].copy_from_slice(x);
            }
        }
    }
    ScenarioSet::from_dense(kind, grid, n, s, values, set.activations().to_vec())
}

fn fork_specs(forks: &[ForkRequest]) -> Vec<ForkSpec> {
    forks
        .iter()
        .map(|f| ForkSpec {
            physical_scenario: f.scenario - 1,
            time_index: f.time_index,
            count: f.count,
        })
        .collect()
}

fn simulated_steps(set: &ScenarioSet<f64>) -> u64 {
    let n_t = set.grid().len();
    set.activations().iter().map(|&a| (n_t - 1 - a) as u64).sum()
}

/// Step 2. Returns the set and the number of simulated GBM transitions.
pub fn generate_risk_neutral(config: &PipelineConfig, physical: &ScenarioSet<f64>) -> Result<(ScenarioSet<f64>, u64)> {
    let grid = config.risk_neutral.grid.clone().validated()?;
    let with_forks = |base: ScenarioSet<f64>, gbm: &GbmParams<f64>, forks: &[ForkRequest]| -> Result<ScenarioSet<f64>> {
        if forks.is_empty() {
            return Ok(base);
        }
        base.concat(generate_gbm_forked(gbm, &grid, physical, &fork_specs(forks))?)
    };
    let gbm = config.risk_neutral_gbm();
    let set = match &config.risk_neutral.mode {
        RiskNeutralMode::Fixed { n_scenarios, forks, .. } => {
            let gbm = gbm.expect("gbm mode");
            with_forks(generate_gbm_fixed(&gbm, &grid, *n_scenarios)?, &gbm, forks)?
        }
        RiskNeutralMode::Dispersed { starts, forks, .. } => {
            let gbm = gbm.expect("gbm mode");
            with_forks(generate_gbm_dispersed(&gbm, &grid, starts)?, &gbm, forks)?
        }
        RiskNeutralMode::Forked { forks, .. } => {
            generate_gbm_forked(&gbm.expect("gbm mode"), &grid, physical, &fork_specs(forks))?
        }
        RiskNeutralMode::Import { path } => {
            let p = config.resolve(path);
            let f = std::fs::File::open(&p).map_err(|e| Error::io(&p, e))?;
            return Ok((import_risk_neutral_csv(f, grid)?, 0));
        }
        RiskNeutralMode::Inline { scenarios } => {
            return Ok((inline_risk_neutral(grid, scenarios)?, 0));
        }
    };
    let steps = simulated_steps(&set);
    Ok((set, steps))
}

fn inline_risk_neutral(grid: TimeGrid<f64>, scenarios: &[Vec<Option<Vec<f64>>>]) -> Result<ScenarioSet<f64>> {
    let rows = inline_rows(scenarios.iter().cloned());
    let mut text = String::new();
    let s = rows.first().map_or(0, |r| r.values.len());
    text.push_str("scenario,time_index");
    for f in 0..s {
        text.push_str(&format!(",factor_{f}"));
    }
    text.push('\n');
    for r in &rows {
        text.push_str(&format!("{},{}", r.scenario, r.time_index));
        for v in &r.values {
            text.push_str(&format!(",{}", v.expect("inline values")));
        }
        text.push('\n');
    }
    import_risk_neutral_csv(text.as_bytes(), grid)
}

/// Physical times up to maturity must be risk-neutral times; path-dependent
/// products also need both grids to agree up to maturity so that `A_p` and
/// `A_q` count the same fixings.
pub fn check_grids(
    physical: &ScenarioSet<f64>,
    risk_neutral: &ScenarioSet<f64>,
    product: &ProductSpec<f64>,
) -> Result<AlignmentReport<f64>> {
    let maturity = product.maturity(risk_neutral.grid())?;
    let report = validate_alignment_until(physical, risk_neutral, maturity);
    if !report.aligned {
        return Err(Error::GridMismatch(format!(
            "physical times {:?} are not risk-neutral grid times",
            report.missing_times
        )));
    }
    if product.is_path_dependent() {
        let p: Vec<f64> = physical.grid().times().iter().copied().filter(|&t| t <= maturity).collect();
        let q = &risk_neutral.grid().times()[..p.len().min(risk_neutral.grid().len())];
        if p.as_slice() != q {
            return Err(Error::GridMismatch(
                "path-dependent products need the physical grid to equal the risk-neutral grid up to maturity"
                    .into(),
            ));
        }
    }
    Ok(report)
}

/// Physical times strictly before maturity.
pub fn default_fit_times(physical: &ScenarioSet<f64>, maturity: f64) -> Vec<f64> {
    physical.grid().times().iter().copied().filter(|&t| t < maturity).collect()
}

fn fork_initializer<'a>(
    mode: ForkInitMode,
    physical: &'a ScenarioSet<f64>,
    states: &'a PathStateTable<f64>,
) -> ForkInitializer<'a, f64> {
    match mode {
        ForkInitMode::CopyPhysical => ForkInitializer::CopyPhysical { physical, states },
        ForkInitMode::SyntheticPhysicalPrefix => ForkInitializer::SyntheticPhysicalPrefix { physical },
        ForkInitMode::Reject => ForkInitializer::Reject,
    }
}

fn state_updates(states: &PathStateTable<f64>) -> u64 {
    if states.state_dim() == 0 {
        return 0;
    }
    (0..states.n_scenarios())
        .map(|w| (states.n_times() - states.activation(w)) as u64)
        .sum()
}

/// Step 7: `V_p(t, ω) = F(t, P(t, ω), A_p(t, ω))` for physical times before
/// maturity, the payoff itself at maturity, and 0 afterwards.
pub fn evaluate_prices(
    smoother: &Smoother<f64>,
    physical: &ScenarioSet<f64>,
    physical_states: &PathStateTable<f64>,
    risk_neutral_grid: &TimeGrid<f64>,
    product: &ProductSpec<f64>,
) -> Result<(PriceTable, OperationCounts)> {
    let maturity = product.maturity(risk_neutral_grid)?;
    let times = physical.grid().times().to_vec();
    let n = physical.n_scenarios();
    let mut table = PriceTable {
        times: times.clone(),
        n_scenarios: n,
        prices: vec![0.0; times.len() * n],
        std_errors: vec![None; times.len() * n],
        extrapolated: vec![false; times.len() * n],
        metadata: PriceMetadata {
            fit_diagnostics: smoother.diagnostics(),
            ..Default::default()
        },
    };
    let terms = smoother.diagnostics().first().map_or(0, |d| d.basis_size) as u64;
    let mut counts = OperationCounts::default();
    for (ti, &t) in times.iter().enumerate() {
        if t > maturity {
            table.metadata.post_maturity.push(ti);
            continue;
        }
        let at_maturity = risk_neutral_grid.index_of(t) == Some(product.maturity_index);
        let row: Vec<(f64, Option<f64>, bool, bool)> = (0..n)
            .into_par_iter()
            .map(|w| {
                let x = physical.get(ti, w).expect("physical scenarios are always active");
                let a = physical_states.get(ti, w).expect("physical states are always defined");
                if at_maturity {
                    return Ok((product.payoff(x, a), None, false, false));
                }
                let est = smoother.evaluate(t, x, a)?;
                let se = smoother.standard_error(t, x, a)?;
                Ok((est.value, se, est.extrapolated, est.fallback))
            })
            .collect::<Result<_>>()?;
        if !at_maturity {
            counts.evaluations += n as u64;
            counts.evaluation_terms += n as u64 * terms;
        }
        for (w, (v, se, ex, fb)) in row.into_iter().enumerate() {
            let k = ti * n + w;
            table.prices[k] = v;
            table.std_errors[k] = se;
            table.extrapolated[k] = ex;
            table.metadata.extrapolated_cells += ex as usize;
            table.metadata.fallback_cells += fb as usize;
        }
    }
    Ok((table, counts))
}

/// Steps 3–7 on given scenario sets.
pub fn price_scenarios(
    physical: ScenarioSet<f64>,
    risk_neutral: ScenarioSet<f64>,
    spec: &PricingSpec,
) -> Result<PipelineRun> {
    let mut watch = Stopwatch::default();
    run_stages(&mut watch, physical, risk_neutral, spec, 0)
}

fn run_stages(
    watch: &mut Stopwatch,
    physical: ScenarioSet<f64>,
    risk_neutral: ScenarioSet<f64>,
    spec: &PricingSpec,
    simulated: u64,
) -> Result<PipelineRun> {
    let product = &spec.product;
    product.validate()?;
    let alignment = check_grids(&physical, &risk_neutral, product).map_err(|e| e.at(Stage::GenerateRiskNeutral))?;
    let maturity = product.maturity(risk_neutral.grid())?;

    let physical_states = watch.run(Stage::PhysicalState, || {
        compute_state_table(product, &physical, ForkInitializer::Reject)
    })?;
    let risk_neutral_states = watch.run(Stage::RiskNeutralState, || {
        let init = fork_initializer(spec.fork_initializer, &physical, &physical_states);
        compute_state_table(product, &risk_neutral, init)
    })?;
    let values = watch.run(Stage::Valuation, || {
        let cashflows = compute_cashflows(product, &risk_neutral, &risk_neutral_states)?;
        Ok(accumulate_remaining_value(&cashflows, &spec.discount, spec.discount_base))
    })?;
    let fit_times = spec
        .fit_times
        .clone()
        .unwrap_or_else(|| default_fit_times(&physical, maturity));
    let smoother = watch.run(Stage::Fit, || {
        let history = spec.synthetic_history.then(|| SyntheticHistory {
            physical: &physical,
            physical_states: &physical_states,
            discount: spec.discount,
        });
        fit(&risk_neutral, &risk_neutral_states, &values, &spec.fit, &fit_times, history)
    })?;
    let (prices, eval_counts) = watch.run(Stage::Evaluate, || {
        evaluate_prices(&smoother, &physical, &physical_states, risk_neutral.grid(), product)
    })?;

    let counts = OperationCounts {
        simulated_steps: simulated,
        state_updates: state_updates(&physical_states) + state_updates(&risk_neutral_states),
        samples: smoother.diagnostics().iter().map(|d| d.n_samples as u64).sum(),
        ..eval_counts
    };
    Ok(PipelineRun {
        spec: spec.clone(),
        physical,
        risk_neutral,
        physical_states,
        risk_neutral_states,
        values,
        smoother,
        prices,
        alignment,
        fit_times,
        counts,
        timings: std::mem::take(&mut watch.entries),
    })
}

/// Steps 1–7 from a validated configuration.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineRun> {
    let mut watch = Stopwatch::default();
    let physical = watch.run(Stage::ImportPhysical, || load_physical(config))?;
    let (risk_neutral, simulated) = watch.run(Stage::GenerateRiskNeutral, || generate_risk_neutral(config, &physical))?;
    let mut run = run_stages(&mut watch, physical, risk_neutral, &PricingSpec::from_config(config), simulated)?;
    let mut entries = std::mem::take(&mut watch.entries);
    entries.extend(std::mem::take(&mut run.timings));
    run.timings = entries;
    run.prices.metadata.config_digest = Some(config.digest.clone());
    run.prices.metadata.seed = config.effective_seed();
    Ok(run)
}

/// What a persisted run directory needs to be reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescription {
    pub physical_grid: TimeGrid<f64>,
    pub risk_neutral_grid: TimeGrid<f64>,
    pub n_physical: usize,
    pub n_risk_neutral: usize,
    pub n_factors: usize,
    pub state_dim: usize,
    pub fork_origins: Vec<Option<ForkOrigin>>,
    pub spec: PricingSpec,
    pub fit_times: Vec<f64>,
}

/// Audit record written by every completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub config_digest: Option<String>,
    pub seed: Option<u64>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub stage_timings: Vec<StageTiming>,
    pub counts: OperationCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunDescription>,
}

pub fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl RunManifest {
    pub fn new(config_digest: Option<String>, seed: Option<u64>, started_unix_ms: u64) -> Self {
        Self {
            format_version: RUN_FORMAT_VERSION,
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            config_digest,
            seed,
            started_unix_ms,
            finished_unix_ms: unix_millis(),
            stage_timings: Vec::new(),
            counts: OperationCounts::default(),
            run: None,
        }
    }

    /// Manifest for a finished run.
    pub fn for_run(run: &PipelineRun, started_unix_ms: u64) -> Self {
        Self {
            stage_timings: run.timings.clone(),
            counts: run.counts,
            run: Some(RunDescription {
                physical_grid: run.physical.grid().clone(),
                risk_neutral_grid: run.risk_neutral.grid().clone(),
                n_physical: run.physical.n_scenarios(),
                n_risk_neutral: run.risk_neutral.n_scenarios(),
                n_factors: run.risk_neutral.n_factors(),
                state_dim: run.risk_neutral_states.state_dim(),
                fork_origins: (0..run.risk_neutral.n_scenarios())
                    .map(|w| run.risk_neutral.fork_origin(w))
                    .collect(),
                spec: run.spec.clone(),
                fit_times: run.fit_times.clone(),
            }),
            ..Self::new(
                run.prices.metadata.config_digest.clone(),
                run.prices.metadata.seed,
                started_unix_ms,
            )
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text)
            .map_err(|e| Error::IncompatibleArtifact(format!("manifest: {e}")))?;
        if v.format_version != RUN_FORMAT_VERSION {
            return Err(Error::IncompatibleArtifact(format!(
                "run format version {} (expected {RUN_FORMAT_VERSION})",
                v.format_version
            )));
        }
        serde_json::from_str(text).map_err(|e| Error::IncompatibleArtifact(format!("manifest: {e}")))
    }
}

pub const Q_FILE: &str = "q_scenarios.csv";
pub const A_Q_FILE: &str = "a_q.csv";
pub const SMOOTHER_FILE: &str = "smoother.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PHYSICAL_FILE: &str = "p_scenarios.csv";
pub const PRICES_FILE: &str = "prices.csv";

fn write_states_csv<W: Write>(states: &PathStateTable<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["scenario".to_string(), "time_index".to_string()];
    header.extend((0..states.state_dim()).map(|k| format!("state_{k}")));
    w.write_record(&header)?;
    for s in 0..states.n_scenarios() {
        for ti in states.activation(s)..states.n_times() {
            let mut rec = vec![(s + 1).to_string(), ti.to_string()];
            rec.extend(states.get(ti, s).expect("active").iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<state table>", e))?;
    Ok(())
}

fn read_states_csv<R: Read>(reader: R, scenarios: &ScenarioSet<f64>, state_dim: usize) -> Result<PathStateTable<f64>> {
    let n_t = scenarios.grid().len();
    let n = scenarios.n_scenarios();
    let mut values = vec![0.0; n_t * n * state_dim];
    let mut seen = vec![false; n_t * n];
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.len() != 2 + state_dim {
        return Err(Error::IncompatibleArtifact("state table width does not match manifest".into()));
    }
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::IncompatibleArtifact("malformed state table row".into());
        let s: usize = rec[0].parse().map_err(|_| bad())?;
        let ti: usize = rec[1].parse().map_err(|_| bad())?;
        if s == 0 || s > n || ti >= n_t || !scenarios.is_active(ti, s - 1) {
            return Err(bad());
        }
        seen[ti * n + s - 1] = true;
        for k in 0..state_dim {
            values[((ti * n) + s - 1) * state_dim + k] = rec[2 + k].parse().map_err(|_| bad())?;
        }
    }
    let complete = (0..n).all(|w| (scenarios.activation(w)..n_t).all(|ti| seen[ti * n + w]));
    if !complete {
        return Err(Error::IncompatibleArtifact("state table misses active cells".into()));
    }
    PathStateTable::from_dense(n_t, n, state_dim, values, scenarios.activations().to_vec())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Writes `Q`, `A_q`, `F`, `P`, the prices, and the manifest into `dir`.
pub fn persist_run(dir: &Path, run: &PipelineRun, manifest: &RunManifest) -> Result<()> {
    let go = || -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(Q_FILE), &csv_bytes(|b| write_scenarios_csv(&run.risk_neutral, b))?)?;
        write_atomic(&dir.join(A_Q_FILE), &csv_bytes(|b| write_states_csv(&run.risk_neutral_states, b))?)?;
        write_atomic(&dir.join(PHYSICAL_FILE), &csv_bytes(|b| write_scenarios_csv(&run.physical, b))?)?;
        write_atomic(&dir.join(SMOOTHER_FILE), run.smoother.to_json()?.as_bytes())?;
        write_atomic(&dir.join(PRICES_FILE), run.prices.to_csv_string()?.as_bytes())?;
        // manifest last: its presence marks a complete directory
        write_atomic(&dir.join(MANIFEST_FILE), manifest.to_json()?.as_bytes())
    };
    go().map_err(|e| e.at(Stage::Persist))
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub description: RunDescription,
    pub physical: Option<ScenarioSet<f64>>,
    pub risk_neutral: ScenarioSet<f64>,
    pub risk_neutral_states: PathStateTable<f64>,
    pub smoother: Smoother<f64>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest = RunManifest::from_json(&read_to_string(&dir.join(MANIFEST_FILE))?)?;
    let description = manifest
        .run
        .clone()
        .ok_or_else(|| Error::IncompatibleArtifact("manifest does not describe a persisted run".into()))?;
    let open = |name: &str| {
        let p = dir.join(name);
        std::fs::File::open(&p).map_err(|e| Error::io(&p, e))
    };
    let risk_neutral = import_risk_neutral_csv(open(Q_FILE)?, description.risk_neutral_grid.clone())?;
    if risk_neutral.n_scenarios() != description.n_risk_neutral
        || risk_neutral.n_factors() != description.n_factors
        || description.fork_origins.len() != description.n_risk_neutral
    {
        return Err(Error::IncompatibleArtifact("risk-neutral scenarios do not match manifest".into()));
    }
    let risk_neutral = risk_neutral.with_fork_origins(description.fork_origins.clone());
    let risk_neutral_states = read_states_csv(open(A_Q_FILE)?, &risk_neutral, description.state_dim)?;
    let smoother = Smoother::from_json(&read_to_string(&dir.join(SMOOTHER_FILE))?)?;
    let physical = if dir.join(PHYSICAL_FILE).is_file() {
        Some(import_physical_csv(open(PHYSICAL_FILE)?, description.physical_grid.clone())?)
    } else {
        None
    };
    Ok(LoadedRun {
        manifest,
        description,
        physical,
        risk_neutral,
        risk_neutral_states,
        smoother,
    })
}

impl LoadedRun {
    /// Prices `physical` with the persisted smoother; no simulation, no fit.
    pub fn evaluate(&self, physical: &ScenarioSet<f64>) -> Result<PriceTable> {
        let product = &self.description.spec.product;
        check_grids(physical, &self.risk_neutral, product)?;
        let states = compute_state_table(product, physical, ForkInitializer::Reject)?;
        Ok(evaluate_prices(&self.smoother, physical, &states, self.risk_neutral.grid(), product)?.0)
    }

    /// Recomputes `V_q` from the persisted paths and fits a new smoother.
    pub fn refit(&self, config: &FitConfig<f64>) -> Result<Smoother<f64>> {
        let spec = &self.description.spec;
        let cashflows = compute_cashflows(&spec.product, &self.risk_neutral, &self.risk_neutral_states)?;
        let values = accumulate_remaining_value(&cashflows, &spec.discount, spec.discount_base);
        let physical_states = match (&self.physical, spec.synthetic_history) {
            (Some(p), true) => Some(compute_state_table(&spec.product, p, ForkInitializer::Reject)?),
            _ => None,
        };
        let history = match (&self.physical, &physical_states) {
            (Some(physical), Some(physical_states)) => Some(SyntheticHistory {
                physical,
                physical_states,
                discount: spec.discount,
            }),
            _ => None,
        };
        fit(
            &self.risk_neutral,
            &self.risk_neutral_states,
            &values,
            config,
            &self.description.fit_times,
            history,
        )
    }
}

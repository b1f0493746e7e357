//! Built-in worked example, run end to end and checked cell by cell.

use clap::ValueEnum;
use smoothprice::engine::{price_scenarios, PricingSpec, PipelineRun};
use smoothprice::product::{compute_cashflows, compute_state_table};
use smoothprice::scenario::{generate_gbm_dispersed, generate_gbm_forked, ForkSpec};
use smoothprice::smoothing::{build_sample_set, fit_polynomial, FitOptions};
use smoothprice::valuation::accumulate_remaining_value;
use smoothprice::worked_example as wx;
use smoothprice::{BasisSpec, DiscountBase, DiscountModel, FitConfig, ForkInitializer, GbmParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    /// European call on the 5-path risk-neutral set.
    European,
    /// Risk-neutral paths with dispersed starting values.
    Extension1,
    /// Risk-neutral paths forked off the physical scenarios.
    Extension2,
    /// Asian call on the forked set.
    Asian,
}

pub struct Cell {
    pub label: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Cell {
    fn new(label: impl Into<String>, computed: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            label: label.into(),
            computed,
            expected,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        (self.computed - self.expected).abs() <= self.tolerance
    }
}

#[derive(Default)]
pub struct Report {
    pub cells: Vec<Cell>,
    /// Computed values with no published counterpart.
    pub info: Vec<String>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(Cell::passed)
    }

    pub fn render(&self, failures_only: bool) -> String {
        let mut out = String::new();
        if !failures_only {
            out.push_str(&format!(
                "{:<28} {:>14} {:>14} {:>10}  result\n",
                "cell", "computed", "expected", "tolerance"
            ));
        }
        for c in &self.cells {
            if failures_only && c.passed() {
                continue;
            }
            out.push_str(&format!(
                "{:<28} {:>14.6} {:>14.6} {:>10.1e}  {}\n",
                c.label,
                c.computed,
                c.expected,
                c.tolerance,
                if c.passed() { "PASS" } else { "FAIL" }
            ));
        }
        if !failures_only {
            for line in &self.info {
                out.push_str(&format!("info: {line}\n"));
            }
            for line in &self.notes {
                out.push_str(&format!("note: {line}\n"));
            }
        }
        let failed = self.cells.iter().filter(|c| !c.passed()).count();
        out.push_str(&format!(
            "{}: {} of {} cells passed\n",
            if failed == 0 { "PASS" } else { "FAIL" },
            self.cells.len() - failed,
            self.cells.len()
        ));
        out
    }
}

pub fn run(variant: Variant) -> Result<Report> {
    match variant {
        Variant::European => european(),
        Variant::Extension1 => extension1(),
        Variant::Extension2 => extension2(),
        Variant::Asian => asian(),
    }
}

fn quadratic(product: smoothprice::ProductSpec<f64>) -> PricingSpec {
    PricingSpec::new(product, DiscountModel::flat(0.0), FitConfig::polynomial(BasisSpec::quadratic()))
}

fn price_info(run: &PipelineRun, ti: usize) -> String {
    let prices: Vec<String> = (0..run.prices.n_scenarios)
        .map(|w| format!("{:.4}", run.prices.get(ti, w)))
        .collect();
    format!("V_p(t{ti}) = ({})", prices.join(", "))
}

fn european() -> Result<Report> {
    let run = price_scenarios(wx::physical(), wx::risk_neutral(), &quadratic(wx::european_call()))?;
    let mut report = Report::default();
    for (ti, coeffs) in [(1, wx::EUROPEAN_COEFFS_T1), (2, wx::EUROPEAN_COEFFS_T2)] {
        let fit = run.smoother.polynomial_fit(ti as f64).expect("fitted time");
        for (k, (&c, e)) in fit.coefficients.iter().zip(coeffs).enumerate() {
            report.cells.push(Cell::new(format!("c{k}(t{ti})"), c, e, 5e-4));
        }
    }
    for (ti, prices) in [(1, wx::EUROPEAN_PRICES_T1), (2, wx::EUROPEAN_PRICES_T2)] {
        for (w, e) in prices.into_iter().enumerate() {
            report.cells.push(Cell::new(format!("V_p(t{ti}, w{})", w + 1), run.prices.get(ti, w), e, 0.02));
        }
    }
    Ok(report)
}

fn extension1() -> Result<Report> {
    let mut report = Report::default();
    let starts = [80.0, 90.0, 100.0, 110.0, 120.0];
    let table = wx::dispersed();
    let generated = generate_gbm_dispersed(&GbmParams::single(100.0, 0.0, 0.2, 1), &wx::risk_neutral_grid(), &starts)?;
    for (w, &s) in starts.iter().enumerate() {
        report.cells.push(Cell::new(format!("Q(t0, w{}) table", w + 1), table.value(0, w, 0).unwrap(), s, 0.0));
        report.cells.push(Cell::new(format!("Q(t0, w{}) generated", w + 1), generated.value(0, w, 0).unwrap(), s, 0.0));
    }
    let run = price_scenarios(wx::physical(), table, &quadratic(wx::european_call()))?;
    let rank = run.smoother.polynomial_fit(0.0).expect("fitted time").rank;
    report.cells.push(Cell::new("rank of fit at t0", rank as f64, 3.0, 0.0));
    report.info.push(price_info(&run, 1));
    report.info.push(price_info(&run, 2));
    report.notes.push("no published prices for this set; structural cells only".into());
    Ok(report)
}

fn extension2() -> Result<Report> {
    let mut report = Report::default();
    let q = wx::with_forks();
    for (w, (activation, _)) in wx::FORKED.iter().enumerate() {
        let w = w + 5;
        report.cells.push(Cell::new(format!("I(w{})", w + 1), q.activation(w) as f64, *activation as f64, 0.0));
    }
    let p = wx::physical();
    let forks: Vec<ForkSpec> = [1, 2]
        .into_iter()
        .flat_map(|ti| {
            (0..3).map(move |w| ForkSpec {
                physical_scenario: w,
                time_index: ti,
                count: 1,
            })
        })
        .collect();
    let generated = generate_gbm_forked(&GbmParams::single(100.0, 0.0, 0.2, 1), &wx::risk_neutral_grid(), &p, &forks)?;
    for (k, f) in forks.iter().enumerate() {
        report.cells.push(Cell::new(
            format!("Q(t{}, w{}) forked", f.time_index, k + 6),
            generated.value(f.time_index, k, 0).unwrap(),
            p.value(f.time_index, f.physical_scenario, 0).unwrap(),
            0.0,
        ));
    }
    let product = wx::european_call();
    let states = compute_state_table(&product, &q, ForkInitializer::Reject)?;
    let cf = compute_cashflows(&product, &q, &states)?;
    let v = accumulate_remaining_value(&cf, &DiscountModel::flat(0.0), DiscountBase::ValuationTime);
    let samples = build_sample_set(&q, &states, &v, &[1.0], None)?;
    report.cells.push(Cell::new("samples at t1", samples.len() as f64, 8.0, 0.0));
    let run = price_scenarios(p, q, &quadratic(product))?;
    report.info.push(price_info(&run, 1));
    report.info.push(price_info(&run, 2));
    report.notes.push("paths 9-11 activate at t2 and are not used at t1".into());
    Ok(report)
}

fn asian() -> Result<Report> {
    let mut report = Report::default();
    let product = wx::asian_call();
    let p = wx::physical();
    let q = wx::with_forks();
    let ap = compute_state_table(&product, &p, ForkInitializer::Reject)?;
    let aq = compute_state_table(&product, &q, ForkInitializer::CopyPhysical { physical: &p, states: &ap })?;
    let cf = compute_cashflows(&product, &q, &aq)?;
    let v = accumulate_remaining_value(&cf, &DiscountModel::flat(0.0), DiscountBase::ValuationTime);
    let samples = build_sample_set(&q, &aq, &v, &[1.0], None)?;
    let fit = fit_polynomial(&samples, &BasisSpec::quadratic(), FitOptions::default())?;
    report.cells.push(Cell::new("rank of fit at t1", fit.rank as f64, 3.0, 0.0));

    let spec = PricingSpec {
        synthetic_history: true,
        ..quadratic(product)
    };
    let run = price_scenarios(p.clone(), q, &spec)?;
    for (w, e) in wx::ASIAN_PRICES_T1.into_iter().enumerate() {
        report.cells.push(Cell::new(format!("V_p(t1, w{})", w + 1), run.prices.get(1, w), e, 0.05));
    }
    let literal: Vec<String> = (0..3)
        .map(|w| format!("{:.4}", fit.predict(&[p.value(1, w, 0).unwrap(), ap.get(1, w).unwrap()[0]])))
        .collect();
    report.notes.push(format!(
        "rank deficient: the t1 fit over {} active samples has rank {} of {} terms because A = (100 + Q) / 2 on every \
         sample; coefficients are not unique, predictions are",
        samples.len(),
        fit.rank,
        fit.coefficients.len()
    ));
    report.notes.push(format!(
        "prices use the forked paths' physical history at t1 as extra samples; the {} active samples alone give ({})",
        samples.len(),
        literal.join(", ")
    ));
    Ok(report)
}

//! Scenario pricing without nested simulation.
//!
//! One set of risk-neutral paths is simulated, the discounted remaining value
//! of the product is computed along every path, and a smoothing operator
//! (polynomial least squares or Gaussian-kernel regression) turns those
//! samples into a price function `F(t, risk factors, path state)`. `F` is then
//! evaluated at every physical scenario and time step instead of launching an
//! inner Monte Carlo simulation per scenario.
//!
//! The numeric core is generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! aliases below fix it to `f64`, which is what configuration, file formats,
//! and the CLI use.

pub mod benchmark;
pub mod config;
pub mod engine;
pub mod error;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod product;
pub mod risk;
pub mod scalar;
pub mod scenario;
pub mod smoothing;
pub mod valuation;
pub mod worked_example;

pub use error::{Error, Result, Stage};
pub use scalar::Scalar;

pub use product::{CashFlowTable, ForkInitializer, PathStateTable, ProductKind, ProductSpec};
pub use scenario::{GbmParams, ScenarioKind, ScenarioSet, TimeGrid};
pub use smoothing::{BasisSpec, Estimate, FitConfig, SampleSet, Smoother, SmootherKind};
pub use valuation::{DiscountBase, DiscountModel, ValueTable};

pub type TimeGrid64 = TimeGrid<f64>;
pub type ScenarioSet64 = ScenarioSet<f64>;
pub type GbmParams64 = GbmParams<f64>;
pub type ProductSpec64 = ProductSpec<f64>;
pub type PathStateTable64 = PathStateTable<f64>;
pub type ValueTable64 = ValueTable<f64>;
pub type SampleSet64 = SampleSet<f64>;
pub type Smoother64 = Smoother<f64>;

pub type TimeGrid32 = TimeGrid<f32>;
pub type ScenarioSet32 = ScenarioSet<f32>;
pub type Smoother32 = Smoother<f32>;

//! JSON run configuration.
//!
//! One document covers every stage: where the physical scenarios come from,
//! how the risk-neutral paths are generated, the product, discounting, the
//! smoother, and optionally the benchmark. Relative file paths are resolved
//! against the directory of the config file. Errors name the offending field
//! as a dotted path, e.g. `product.strike`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmark::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::io::read_to_string;
use crate::product::ProductSpec;
use crate::scenario::{GbmParams, GbmStepper, TimeGrid};
use crate::smoothing::{Bandwidth, FitConfig};
use crate::valuation::{DiscountBase, DiscountModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhysicalSource {
    /// `scenario,time_index,factor_0,...` rows on the given grid.
    Csv { path: PathBuf, grid: TimeGrid<f64> },
    /// `{"grid": {...}, "scenarios": [[[v, ...], ...], ...]}`.
    Json { path: PathBuf },
    /// `scenarios[ω][t][factor]`.
    Inline {
        grid: TimeGrid<f64>,
        scenarios: Vec<Vec<Vec<f64>>>,
    },
    Gbm {
        grid: TimeGrid<f64>,
        n_scenarios: usize,
        gbm: GbmParams<f64>,
    },
}

/// A fork request as written in config files: 1-based physical scenario id
/// and a physical grid index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForkRequest {
    pub scenario: usize,
    pub time_index: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RiskNeutralMode {
    /// `n_scenarios` paths from `gbm.initial_value`, plus optional forks.
    Fixed {
        n_scenarios: usize,
        gbm: GbmParams<f64>,
        #[serde(default)]
        forks: Vec<ForkRequest>,
    },
    /// One path per start value, plus optional forks.
    Dispersed {
        starts: Vec<f64>,
        gbm: GbmParams<f64>,
        #[serde(default)]
        forks: Vec<ForkRequest>,
    },
    /// Forked paths only.
    Forked {
        gbm: GbmParams<f64>,
        forks: Vec<ForkRequest>,
    },
    /// Active rows only; a path's first row is its activation.
    Import { path: PathBuf },
    /// `scenarios[ω][t]` is `null` before activation.
    Inline {
        scenarios: Vec<Vec<Option<Vec<f64>>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskNeutralConfig {
    pub grid: TimeGrid<f64>,
    #[serde(flatten)]
    pub mode: RiskNeutralMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountConfig {
    #[serde(flatten)]
    pub model: DiscountModel<f64>,
    #[serde(default)]
    pub base: DiscountBase,
}

impl Default for DiscountConfig {
    fn default() -> Self {
        Self {
            model: DiscountModel::flat(0.0),
            base: DiscountBase::ValuationTime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    #[serde(flatten)]
    pub fit: FitConfig<f64>,
    /// Forked paths also contribute samples from their physical prefix.
    #[serde(default)]
    pub synthetic_history: bool,
}

/// How forked paths get their initial path state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForkInitMode {
    #[default]
    CopyPhysical,
    SyntheticPhysicalPrefix,
    Reject,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for prices, run artifacts, and the manifest.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the seeds of every GBM section when present.
    #[serde(default)]
    pub seed: Option<u64>,
    pub physical: PhysicalSource,
    pub risk_neutral: RiskNeutralConfig,
    pub product: ProductSpec<f64>,
    #[serde(default)]
    pub discount: DiscountConfig,
    pub smoother: SmootherConfig,
    #[serde(default)]
    pub fork_initializer: ForkInitMode,
    /// Risk-neutral times to fit; default: every physical time before
    /// maturity.
    #[serde(default)]
    pub fit_times: Option<Vec<f64>>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub benchmark: Option<BenchmarkConfig>,
    /// Directory relative paths resolve against; set by the loader.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// SHA-256 of the canonical JSON form of the document.
    #[serde(skip)]
    pub digest: String,
}

/// Parses `text` into `T`, reporting the failing field as a dotted path.
pub(crate) fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "<root>".to_string() } else { field };
        Error::config(field, e.into_inner().to_string())
    })
}

/// Hex SHA-256 of a JSON value with object keys in sorted order.
pub fn canonical_digest(value: &serde_json::Value) -> String {
    // serde_json's default map is ordered by key, so this is canonical
    let text = serde_json::to_string(value).expect("JSON value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Stream-separated seed derived from a base seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PHYSICAL_SEED_SALT: u64 = 1;

impl PipelineConfig {
    pub fn from_json_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))?;
        let mut cfg: Self = parse_json(text)?;
        cfg.base_dir = base_dir.into();
        cfg.digest = canonical_digest(&value);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, dir)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Replaces the top-level seed, e.g. from a command-line flag.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Risk-neutral GBM parameters with the seed override applied.
    pub fn risk_neutral_gbm(&self) -> Option<GbmParams<f64>> {
        let mut p = match &self.risk_neutral.mode {
            RiskNeutralMode::Fixed { gbm, .. }
            | RiskNeutralMode::Dispersed { gbm, .. }
            | RiskNeutralMode::Forked { gbm, .. } => gbm.clone(),
            _ => return None,
        };
        if let Some(s) = self.seed {
            p.seed = s;
        }
        Some(p)
    }

    /// Physical GBM parameters with the seed override applied; the physical
    /// seed is derived so its streams never coincide with the risk-neutral ones.
    pub fn physical_gbm(&self) -> Option<GbmParams<f64>> {
        match &self.physical {
            PhysicalSource::Gbm { gbm, .. } => {
                let mut p = gbm.clone();
                if let Some(s) = self.seed {
                    p.seed = derive_seed(s, PHYSICAL_SEED_SALT);
                }
                Some(p)
            }
            _ => None,
        }
    }

    /// Effective seed recorded in outputs.
    pub fn effective_seed(&self) -> Option<u64> {
        self.seed.or_else(|| self.risk_neutral_gbm().map(|g| g.seed))
    }

    pub fn validate(&self) -> Result<()> {
        self.product.validate()?;
        let grid = self
            .risk_neutral
            .grid
            .clone()
            .validated()
            .map_err(|e| Error::config("risk_neutral.grid", e.to_string()))?;
        if self.product.maturity_index >= grid.len() {
            return Err(Error::config(
                "product.maturity_index",
                format!("{} is outside the risk-neutral grid of {} times", self.product.maturity_index, grid.len()),
            ));
        }
        let rate = self.discount.model.rate();
        if !rate.is_finite() {
            return Err(Error::config("discount.rate", "must be finite"));
        }
        if let Bandwidth::Fixed(h) = self.smoother.fit.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("smoother.bandwidth", format!("must be > 0, got {h}")));
            }
        }
        if self.smoother.fit.basis.degree > 12 {
            return Err(Error::config("smoother.basis.degree", "at most 12 is supported"));
        }
        self.validate_physical()?;
        self.validate_risk_neutral()?;
        if let Some(times) = &self.fit_times {
            if let Some(t) = times.iter().find(|t| grid.index_of(**t).is_none()) {
                return Err(Error::config("fit_times", format!("{t} is not a risk-neutral grid time")));
            }
        }
        if let Some(b) = &self.benchmark {
            b.validate()?;
        }
        Ok(())
    }

    fn check_file(&self, field: &str, path: &Path) -> Result<()> {
        let p = self.resolve(path);
        if p.is_file() {
            Ok(())
        } else {
            Err(Error::config(field, format!("file not found: {}", p.display())))
        }
    }

    fn validate_physical(&self) -> Result<()> {
        let check_grid = |g: &TimeGrid<f64>| {
            g.clone()
                .validated()
                .map(|_| ())
                .map_err(|e| Error::config("physical.grid", e.to_string()))
        };
        match &self.physical {
            PhysicalSource::Csv { path, grid } => {
                check_grid(grid)?;
                self.check_file("physical.path", path)
            }
            PhysicalSource::Json { path } => self.check_file("physical.path", path),
            PhysicalSource::Inline { grid, scenarios } => {
                check_grid(grid)?;
                if scenarios.is_empty() {
                    return Err(Error::config("physical.scenarios", "must not be empty"));
                }
                Ok(())
            }
            PhysicalSource::Gbm { grid, n_scenarios, gbm } => {
                check_grid(grid)?;
                if *n_scenarios == 0 {
                    return Err(Error::config("physical.n_scenarios", "must be at least 1"));
                }
                GbmStepper::new(gbm).map_err(|e| Error::config("physical.gbm", e.to_string()))?;
                Ok(())
            }
        }
    }

    fn validate_risk_neutral(&self) -> Result<()> {
        let check_gbm = |gbm: &GbmParams<f64>| {
            GbmStepper::new(gbm)
                .map(|_| ())
                .map_err(|e| Error::config("risk_neutral.gbm", e.to_string()))
        };
        let check_forks = |forks: &[ForkRequest]| {
            for (i, f) in forks.iter().enumerate() {
                if f.scenario == 0 {
                    return Err(Error::config(
                        format!("risk_neutral.forks[{i}].scenario"),
                        "scenario ids are 1-based",
                    ));
                }
                if f.count == 0 {
                    return Err(Error::config(format!("risk_neutral.forks[{i}].count"), "must be at least 1"));
                }
            }
            Ok(())
        };
        match &self.risk_neutral.mode {
            RiskNeutralMode::Fixed { n_scenarios, gbm, forks } => {
                if *n_scenarios == 0 {
                    return Err(Error::config("risk_neutral.n_scenarios", "must be at least 1"));
                }
                check_gbm(gbm)?;
                check_forks(forks)
            }
            RiskNeutralMode::Dispersed { starts, gbm, forks } => {
                if starts.is_empty() {
                    return Err(Error::config("risk_neutral.starts", "must not be empty"));
                }
                if let Some(s) = starts.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                    return Err(Error::config("risk_neutral.starts", format!("start values must be > 0, got {s}")));
                }
                check_gbm(gbm)?;
                check_forks(forks)
            }
            RiskNeutralMode::Forked { gbm, forks } => {
                if forks.is_empty() {
                    return Err(Error::config("risk_neutral.forks", "must not be empty"));
                }
                check_gbm(gbm)?;
                check_forks(forks)
            }
            RiskNeutralMode::Import { path } => self.check_file("risk_neutral.path", path),
            RiskNeutralMode::Inline { scenarios } => {
                if scenarios.is_empty() {
                    return Err(Error::config("risk_neutral.scenarios", "must not be empty"));
                }
                Ok(())
            }
        }
    }
}

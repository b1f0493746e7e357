use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage, used to tag errors that escape `run_pipeline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    ImportPhysical,
    GenerateRiskNeutral,
    PhysicalState,
    RiskNeutralState,
    Valuation,
    Fit,
    Evaluate,
    Persist,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::ImportPhysical => "import-physical",
            Stage::GenerateRiskNeutral => "generate-risk-neutral",
            Stage::PhysicalState => "physical-state",
            Stage::RiskNeutralState => "risk-neutral-state",
            Stage::Valuation => "valuation",
            Stage::Fit => "fit",
            Stage::Evaluate => "evaluate",
            Stage::Persist => "persist",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed scenario data: {0}")]
    MalformedScenarioData(String),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("cannot initialize path state of forked scenario {scenario}: {reason}")]
    UninitializableForkState { scenario: usize, reason: String },
    #[error("empty sample set")]
    EmptySampleSet,
    #[error("no active samples at time index {time_index} (t = {time})")]
    InsufficientSamples { time_index: usize, time: f64 },
    #[error("smoother has no fit for time {0}")]
    UnsupportedTimestep(f64),
    #[error("shape error: {0}")]
    ShapeError(String),
    #[error("incompatible artifact: {0}")]
    IncompatibleArtifact(String),
    #[error("empty loss distribution")]
    EmptyDistribution,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config error at `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input (config, schema, files) rather than
    /// by a failing computation. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Io { .. } | Error::Json(_) | Error::Csv(_) => true,
            Error::MalformedScenarioData(_) | Error::InvalidTimeGrid(_) | Error::InvalidValue(_) => {
                true
            }
            Error::Stage { stage, source } => {
                matches!(stage, Stage::ImportPhysical | Stage::GenerateRiskNeutral) && source.is_usage()
            }
            _ => false,
        }
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{fit_kernel, Bandwidth, KernelSmoother};
use super::polynomial::{fit_polynomial, FitOptions, PolynomialFit};
use super::{build_samples, time_indices, BasisSpec, SampleSet, SyntheticHistory};
use crate::error::{Error, Result};
use crate::linalg::Solver;
use crate::product::PathStateTable;
use crate::scalar::Scalar;
use crate::scenario::ScenarioSet;
use crate::valuation::ValueTable;

pub const SMOOTHER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherKind {
    PolynomialPerTimestep,
    /// One regression over all requested times, with time as an input.
    PolynomialGlobal,
    KernelPerTimestep,
}

/// Everything that determines a fit besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig<T> {
    pub kind: SmootherKind,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_solver")]
    pub solver: Solver,
    #[serde(default)]
    pub bandwidth: Bandwidth<T>,
}

fn default_solver() -> Solver {
    Solver::Svd
}

impl<T: Scalar> FitConfig<T> {
    pub fn polynomial(basis: BasisSpec) -> Self {
        Self {
            kind: SmootherKind::PolynomialPerTimestep,
            basis,
            standardize: false,
            solver: Solver::Svd,
            bandwidth: Bandwidth::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, bound(deserialize = "T: Deserialize<'de>"))]
enum Model<T> {
    Polynomial(PolynomialFit<T>),
    Kernel(KernelSmoother<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
struct FitEntry<T> {
    /// Absent for the global fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<T>,
    #[serde(flatten)]
    model: Model<T>,
}

/// Per-fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitDiagnostics<T> {
    pub time_index: Option<usize>,
    pub n_samples: usize,
    pub rank: Option<usize>,
    pub condition: Option<T>,
    pub residual_norm: Option<T>,
    pub basis_size: usize,
}

/// Price estimate from a smoother.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    /// The query lies outside the bounding box of the fit's samples.
    pub extrapolated: bool,
    /// Kernel weights underflowed; `value` is the nearest sample's `Y`.
    pub fallback: bool,
}

/// Fitted price function `F(t, x, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct Smoother<T> {
    format_version: u32,
    kind: SmootherKind,
    basis: BasisSpec,
    n_factors: usize,
    state_dim: usize,
    fits: Vec<FitEntry<T>>,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> Smoother<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut s: Self = serde_json::from_str(text)
            .map_err(|e| Error::IncompatibleArtifact(format!("smoother JSON: {e}")))?;
        if s.format_version != SMOOTHER_FORMAT_VERSION {
            return Err(Error::IncompatibleArtifact(format!(
                "smoother format version {} (expected {SMOOTHER_FORMAT_VERSION})",
                s.format_version
            )));
        }
        let basis = s.basis;
        let kernel = s.kind == SmootherKind::KernelPerTimestep;
        for f in &mut s.fits {
            match (&mut f.model, kernel) {
                (Model::Polynomial(p), false) => p.attach_basis(&basis)?,
                (Model::Kernel(_), true) => {}
                _ => {
                    return Err(Error::IncompatibleArtifact(
                        "fit model does not match smoother kind".into(),
                    ))
                }
            }
        }
        Ok(s)
    }
}

impl<T: Scalar> Smoother<T> {
    pub fn kind(&self) -> SmootherKind {
        self.kind
    }

    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Times with their own fit (empty for the global kind).
    pub fn fitted_times(&self) -> Vec<T> {
        self.fits.iter().filter_map(|f| f.time).collect()
    }

    /// Polynomial fit for `t`, or the global one.
    pub fn polynomial_fit(&self, t: T) -> Option<&PolynomialFit<T>> {
        match &self.entry(t).ok()?.model {
            Model::Polynomial(p) => Some(p),
            Model::Kernel(_) => None,
        }
    }

    pub fn diagnostics(&self) -> Vec<FitDiagnostics<T>> {
        self.fits
            .iter()
            .map(|f| match &f.model {
                Model::Polynomial(p) => FitDiagnostics {
                    time_index: f.time_index,
                    n_samples: p.n_samples,
                    rank: Some(p.rank),
                    condition: p.condition,
                    residual_norm: Some(p.residual_norm),
                    basis_size: p.coefficients.len(),
                },
                Model::Kernel(k) => FitDiagnostics {
                    time_index: f.time_index,
                    n_samples: k.n_samples(),
                    rank: None,
                    condition: None,
                    residual_norm: None,
                    basis_size: k.n_samples(),
                },
            })
            .collect()
    }

    fn entry(&self, t: T) -> Result<&FitEntry<T>> {
        if self.kind == SmootherKind::PolynomialGlobal {
            return self.fits.first().ok_or(Error::UnsupportedTimestep(t.as_f64()));
        }
        let tol = T::of(1e-12) * T::one().max(t.abs());
        self.fits
            .iter()
            .find(|f| f.time.is_some_and(|ft| (ft - t).abs() <= tol))
            .ok_or(Error::UnsupportedTimestep(t.as_f64()))
    }

    fn input(&self, include_time: bool, t: T, x: &[T], a: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n_factors || a.len() != self.state_dim {
            return Err(Error::ShapeError(format!(
                "expected {} risk factors and {} state values, got {} and {}",
                self.n_factors,
                self.state_dim,
                x.len(),
                a.len()
            )));
        }
        let mut z = Vec::with_capacity(x.len() + a.len() + 1);
        if include_time {
            z.push(t);
        }
        z.extend_from_slice(x);
        z.extend_from_slice(a);
        Ok(z)
    }

    /// `F(t, x, a)`. The raw regression output is returned even when negative.
    pub fn evaluate(&self, t: T, x: &[T], a: &[T]) -> Result<Estimate<T>> {
        let entry = self.entry(t)?;
        match &entry.model {
            Model::Polynomial(p) => {
                let z = self.input(p.include_time, t, x, a)?;
                Ok(Estimate {
                    value: p.predict(&z),
                    extrapolated: p.is_outside_bounds(&z),
                    fallback: false,
                })
            }
            Model::Kernel(k) => {
                let z = self.input(k.include_time, t, x, a)?;
                let (value, fallback) = k.predict(&z);
                let extrapolated = z
                    .iter()
                    .zip(k.bounds())
                    .any(|(&v, (lo, hi))| v < lo || v > hi);
                Ok(Estimate {
                    value,
                    extrapolated,
                    fallback,
                })
            }
        }
    }

    /// Standard error of a polynomial estimate; `None` for kernel fits or
    /// fits without residual degrees of freedom.
    pub fn standard_error(&self, t: T, x: &[T], a: &[T]) -> Result<Option<T>> {
        let entry = self.entry(t)?;
        match &entry.model {
            Model::Polynomial(p) => {
                let z = self.input(p.include_time, t, x, a)?;
                Ok(p.standard_error(&z))
            }
            Model::Kernel(_) => Ok(None),
        }
    }

    /// Per-timestep smoother from samples prepared by the caller, one sample
    /// set per time.
    pub fn from_sample_sets(
        config: &FitConfig<T>,
        sets: &[(usize, T, SampleSet<T>)],
    ) -> Result<Self> {
        if config.kind == SmootherKind::PolynomialGlobal {
            return Err(Error::InvalidArgument(
                "per-timestep sample sets cannot build a global smoother".into(),
            ));
        }
        let (n_factors, state_dim) = sets
            .first()
            .map(|(_, _, s)| (s.n_factors(), s.state_dim()))
            .ok_or(Error::EmptySampleSet)?;
        let fits = sets
            .par_iter()
            .map(|(ti, t, samples)| {
                if samples.is_empty() {
                    return Err(Error::InsufficientSamples {
                        time_index: *ti,
                        time: t.as_f64(),
                    });
                }
                let model = fit_model(config, samples, false)?;
                Ok(FitEntry {
                    time_index: Some(*ti),
                    time: Some(*t),
                    model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format_version: SMOOTHER_FORMAT_VERSION,
            kind: config.kind,
            basis: config.basis,
            n_factors,
            state_dim,
            fits,
        })
    }
}

fn fit_model<T: Scalar>(config: &FitConfig<T>, samples: &SampleSet<T>, include_time: bool) -> Result<Model<T>> {
    Ok(match config.kind {
        SmootherKind::PolynomialPerTimestep | SmootherKind::PolynomialGlobal => {
            let opts = FitOptions {
                include_time,
                standardize: config.standardize,
                solver: config.solver,
            };
            Model::Polynomial(fit_polynomial(samples, &config.basis, opts)?)
        }
        SmootherKind::KernelPerTimestep => {
            Model::Kernel(fit_kernel(samples, config.bandwidth, include_time)?)
        }
    })
}

/// Fits `F` over the requested risk-neutral grid times: one fit per time for
/// the per-timestep kinds, a single fit with time as an input for
/// [`SmootherKind::PolynomialGlobal`].
pub fn fit<T: Scalar>(
    scenarios: &ScenarioSet<T>,
    states: &PathStateTable<T>,
    values: &ValueTable<T>,
    config: &FitConfig<T>,
    times: &[T],
    history: Option<SyntheticHistory<'_, T>>,
) -> Result<Smoother<T>> {
    let indices = time_indices(scenarios, times)?;
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no times to fit".into()));
    }
    match config.kind {
        SmootherKind::PolynomialGlobal => {
            let samples = build_samples(scenarios, states, values, times, None, history)?;
            if samples.is_empty() {
                return Err(Error::InsufficientSamples {
                    time_index: indices[0],
                    time: times[0].as_f64(),
                });
            }
            let model = fit_model(config, &samples, true)?;
            Ok(Smoother {
                format_version: SMOOTHER_FORMAT_VERSION,
                kind: config.kind,
                basis: config.basis,
                n_factors: scenarios.n_factors(),
                state_dim: states.state_dim(),
                fits: vec![FitEntry {
                    time_index: None,
                    time: None,
                    model,
                }],
            })
        }
        SmootherKind::PolynomialPerTimestep | SmootherKind::KernelPerTimestep => {
            let sets = indices
                .iter()
                .map(|&ti| {
                    let t = scenarios.grid().time(ti);
                    let s = build_samples(scenarios, states, values, &[t], None, history)?;
                    Ok((ti, t, s))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut smoother = Smoother::from_sample_sets(config, &sets)?;
            smoother.n_factors = scenarios.n_factors();
            smoother.state_dim = states.state_dim();
            Ok(smoother)
        }
    }
}

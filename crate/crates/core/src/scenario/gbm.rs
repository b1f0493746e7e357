use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForkOrigin, ScenarioKind, ScenarioSet, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::scalar::Scalar;

/// Stream ids at or above this value belong to forked paths, so fixed-start
/// and forked paths drawn from one seed never share a stream.
pub const FORK_STREAM_BASE: u64 = 1 << 40;

/// Independent random stream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Multi-factor geometric Brownian motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmParams<T> {
    pub initial_value: Vec<T>,
    /// Per year; the risk-free rate for risk-neutral sets.
    pub drift: T,
    /// Per factor, per square-root year.
    pub volatility: Vec<T>,
    /// Factor correlation; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<T>>>,
    pub seed: u64,
}

impl<T: Scalar> GbmParams<T> {
    pub fn single(initial_value: T, drift: T, volatility: T, seed: u64) -> Self {
        Self {
            initial_value: vec![initial_value],
            drift,
            volatility: vec![volatility],
            correlation: None,
            seed,
        }
    }

    pub fn n_factors(&self) -> usize {
        self.volatility.len()
    }
}

/// Exact log-Euler transition of a correlated GBM.
#[derive(Debug, Clone)]
pub struct GbmStepper<T> {
    drift: T,
    volatility: Vec<T>,
    /// Lower-triangular correlation factor, row-major.
    chol: Vec<T>,
    n: usize,
}

impl<T: Scalar> GbmStepper<T> {
    pub fn new(params: &GbmParams<T>) -> Result<Self> {
        let n = params.volatility.len();
        if n == 0 {
            return Err(Error::InvalidArgument("GBM needs at least one factor".into()));
        }
        if params.initial_value.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} initial values for {n} volatilities",
                params.initial_value.len()
            )));
        }
        if let Some(bad) = params.volatility.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("volatility must be > 0, got {bad}")));
        }
        if let Some(bad) = params.initial_value.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("initial value must be > 0, got {bad}")));
        }
        if !params.drift.is_finite() {
            return Err(Error::InvalidArgument("drift must be finite".into()));
        }
        let chol = match &params.correlation {
            None => {
                let mut id = vec![T::zero(); n * n];
                (0..n).for_each(|i| id[i * n + i] = T::one());
                id
            }
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidArgument(format!("correlation must be {n}x{n}")));
                }
                let tol = T::of(1e-12);
                for i in 0..n {
                    if (rows[i][i] - T::one()).abs() > tol {
                        return Err(Error::InvalidArgument(
                            "correlation diagonal must be 1".into(),
                        ));
                    }
                    for j in 0..i {
                        if (rows[i][j] - rows[j][i]).abs() > tol {
                            return Err(Error::InvalidArgument(
                                "correlation must be symmetric".into(),
                            ));
                        }
                    }
                }
                let flat: Vec<T> = rows.iter().flatten().copied().collect();
                cholesky(&flat, n, T::of(1e-12)).map_err(|_| {
                    Error::InvalidArgument("correlation matrix is not positive semidefinite".into())
                })?
            }
        };
        Ok(Self {
            drift: params.drift,
            volatility: params.volatility.clone(),
            chol,
            n,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.n
    }

    /// Advances `x` by `dt` years in place:
    /// `x ← x · exp((μ − σ²/2) dt + σ √dt · (L z))`.
    pub fn step<R: rand::Rng + ?Sized>(&self, x: &mut [T], dt: T, rng: &mut R, z: &mut [T]) {
        for zi in z.iter_mut() {
            let draw: f64 = StandardNormal.sample(rng);
            *zi = T::of(draw);
        }
        let sqrt_dt = dt.sqrt();
        let half = T::of(0.5);
        for f in 0..self.n {
            let row = &self.chol[f * self.n..f * self.n + f + 1];
            let shock = row.iter().zip(z.iter()).fold(T::zero(), |a, (&l, &zj)| a + l * zj);
            let sigma = self.volatility[f];
            x[f] = x[f] * ((self.drift - half * sigma * sigma) * dt + sigma * sqrt_dt * shock).exp();
        }
    }

    /// Path values on `grid[from..]`, starting at `start` at `grid[from]`;
    /// returned as `(time, factor)` row-major.
    pub fn path<R: rand::Rng + ?Sized>(
        &self,
        start: &[T],
        grid: &[T],
        from: usize,
        rng: &mut R,
    ) -> Vec<T> {
        let mut out = Vec::with_capacity((grid.len() - from) * self.n);
        let mut x = start.to_vec();
        let mut z = vec![T::zero(); self.n];
        out.extend_from_slice(&x);
        for k in (from + 1)..grid.len() {
            self.step(&mut x, grid[k] - grid[k - 1], rng, &mut z);
            out.extend_from_slice(&x);
        }
        out
    }
}

struct PathRequest<T> {
    start: Vec<T>,
    from: usize,
    stream: u64,
    origin: Option<ForkOrigin>,
}

fn assemble<T: Scalar>(
    params: &GbmParams<T>,
    grid: &TimeGrid<T>,
    requests: Vec<PathRequest<T>>,
) -> Result<ScenarioSet<T>> {
    let stepper = GbmStepper::new(params)?;
    let s = stepper.n_factors();
    let n = requests.len();
    let times = grid.times();
    let paths: Vec<Vec<T>> = requests
        .par_iter()
        .map(|req| {
            let mut rng = substream(params.seed, req.stream);
            stepper.path(&req.start, times, req.from, &mut rng)
        })
        .collect();

    let mut values = vec![T::zero(); times.len() * n * s];
    for (w, (req, path)) in requests.iter().zip(&paths).enumerate() {
        for (k, chunk) in path.chunks_exact(s).enumerate() {
            let ti = req.from + k;
            let base = (ti * n + w) * s;
            values[base..base + s].copy_from_slice(chunk);
        }
    }
    let activation = requests.iter().map(|r| r.from).collect();
    let origins = requests.iter().map(|r| r.origin).collect();
    Ok(
        ScenarioSet::from_dense(ScenarioKind::RiskNeutral, grid.clone(), n, s, values, activation)?
            .with_fork_origins(origins),
    )
}

/// `n_scenarios` paths, all starting at `params.initial_value` at the first
/// grid time. Path `ω` uses random stream `ω`.
pub fn generate_gbm_fixed<T: Scalar>(
    params: &GbmParams<T>,
    grid: &TimeGrid<T>,
    n_scenarios: usize,
) -> Result<ScenarioSet<T>> {
    if n_scenarios == 0 {
        return Err(Error::InvalidArgument("n_scenarios must be at least 1".into()));
    }
    let requests = (0..n_scenarios)
        .map(|w| PathRequest {
            start: params.initial_value.clone(),
            from: 0,
            stream: w as u64,
            origin: None,
        })
        .collect();
    assemble(params, grid, requests)
}

/// One path per entry of `starts`; the start replaces factor 0 of
/// `params.initial_value`.
pub fn generate_gbm_dispersed<T: Scalar>(
    params: &GbmParams<T>,
    grid: &TimeGrid<T>,
    starts: &[T],
) -> Result<ScenarioSet<T>> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("starts must be non-empty".into()));
    }
    if let Some(bad) = starts.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("start values must be > 0, got {bad}")));
    }
    let requests = starts
        .iter()
        .enumerate()
        .map(|(w, &s0)| {
            let mut start = params.initial_value.clone();
            if let Some(first) = start.first_mut() {
                *first = s0;
            }
            PathRequest {
                start,
                from: 0,
                stream: w as u64,
                origin: None,
            }
        })
        .collect();
    assemble(params, grid, requests)
}

/// Fork `count` paths off physical scenario `physical_scenario` at physical
/// grid index `time_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkSpec {
    pub physical_scenario: usize,
    pub time_index: usize,
    pub count: usize,
}

/// Paths that start exactly at a physical scenario's value at the fork time
/// and evolve by GBM afterwards. `params.initial_value` only fixes the factor
/// count here.
pub fn generate_gbm_forked<T: Scalar>(
    params: &GbmParams<T>,
    grid: &TimeGrid<T>,
    physical: &ScenarioSet<T>,
    forks: &[ForkSpec],
) -> Result<ScenarioSet<T>> {
    if physical.n_factors() != params.n_factors() {
        return Err(Error::ShapeError(format!(
            "physical set has {} factors, GBM has {}",
            physical.n_factors(),
            params.n_factors()
        )));
    }
    let mut requests = Vec::new();
    for spec in forks {
        if spec.time_index >= physical.grid().len() {
            return Err(Error::GridMismatch(format!(
                "fork time index {} is outside the physical grid",
                spec.time_index
            )));
        }
        if spec.physical_scenario >= physical.n_scenarios() {
            return Err(Error::InvalidArgument(format!(
                "fork references physical scenario {} of {}",
                spec.physical_scenario + 1,
                physical.n_scenarios()
            )));
        }
        let t = physical.grid().time(spec.time_index);
        let from = grid.index_of(t).ok_or_else(|| {
            Error::GridMismatch(format!("fork time {t} is not in the risk-neutral grid"))
        })?;
        let start = physical
            .get(spec.time_index, spec.physical_scenario)
            .ok_or_else(|| Error::InvalidArgument("fork value is undefined".into()))?
            .to_vec();
        for _ in 0..spec.count {
            let stream = FORK_STREAM_BASE + requests.len() as u64;
            requests.push(PathRequest {
                start: start.clone(),
                from,
                stream,
                origin: Some(ForkOrigin {
                    physical_scenario: spec.physical_scenario,
                    physical_time_index: spec.time_index,
                }),
            });
        }
    }
    if requests.is_empty() {
        return Err(Error::InvalidArgument("fork specification produces no paths".into()));
    }
    assemble(params, grid, requests)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid<f64> {
        TimeGrid::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap()
    }

    #[test]
    fn degenerate_diffusion_is_constant() {
        let p = GbmParams::single(100.0, 0.0, 1e-20, 1);
        let set = generate_gbm_fixed(&p, &grid(), 4).unwrap();
        for t in 0..4 {
            for w in 0..4 {
                assert_eq!(set.value(t, w, 0), Some(100.0));
            }
        }
    }

    #[test]
    fn same_seed_same_paths() {
        let p = GbmParams::single(100.0, 0.03, 0.3, 42);
        let a = generate_gbm_fixed(&p, &grid(), 50).unwrap();
        let b = generate_gbm_fixed(&p, &grid(), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn path_independent_of_scenario_count() {
        let p = GbmParams::single(100.0, 0.03, 0.3, 7);
        let small = generate_gbm_fixed(&p, &grid(), 3).unwrap();
        let large = generate_gbm_fixed(&p, &grid(), 30).unwrap();
        for t in 0..4 {
            for w in 0..3 {
                assert_eq!(small.get(t, w), large.get(t, w));
            }
        }
    }

    #[test]
    fn zero_scenarios_rejected() {
        let p = GbmParams::single(100.0, 0.0, 0.2, 1);
        assert!(matches!(
            generate_gbm_fixed(&p, &grid(), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dispersed_starts() {
        let p = GbmParams::single(100.0, 0.0, 0.4, 3);
        let set = generate_gbm_dispersed(&p, &grid(), &[80.0, 90.0, 100.0, 110.0, 120.0]).unwrap();
        let t0: Vec<f64> = (0..5).map(|w| set.value(0, w, 0).unwrap()).collect();
        assert_eq!(t0, vec![80.0, 90.0, 100.0, 110.0, 120.0]);

        let two = generate_gbm_dispersed(&p, &grid(), &[50.0, 150.0]).unwrap();
        assert_eq!(two.value(0, 0, 0), Some(50.0));
        assert_eq!(two.value(0, 1, 0), Some(150.0));
        for t in 1..4 {
            for w in 0..2 {
                let v = two.value(t, w, 0).unwrap();
                assert!(v.is_finite() && v > 0.0);
            }
        }
        assert!(generate_gbm_dispersed(&p, &grid(), &[100.0, -1.0]).is_err());
        assert!(generate_gbm_dispersed(&p, &grid(), &[]).is_err());

        let flat = GbmParams::single(100.0, 0.0, 1e-20, 3);
        let one = generate_gbm_dispersed(&flat, &grid(), &[100.0]).unwrap();
        assert!((0..4).all(|t| one.value(t, 0, 0) == Some(100.0)));
    }

    #[test]
    fn correlated_factors_with_unit_correlation_move_together() {
        let p = GbmParams {
            initial_value: vec![100.0, 100.0],
            drift: 0.0,
            volatility: vec![0.2, 0.2],
            correlation: Some(vec![vec![1.0, 1.0], vec![1.0, 1.0]]),
            seed: 9,
        };
        let set = generate_gbm_fixed(&p, &grid(), 10).unwrap();
        for w in 0..10 {
            let x = set.get(3, w).unwrap();
            assert!((x[0] - x[1]).abs() < 1e-9 * x[0]);
        }
        let bad = GbmParams {
            correlation: Some(vec![vec![1.0, 1.5], vec![1.5, 1.0]]),
            ..p
        };
        assert!(generate_gbm_fixed(&bad, &grid(), 1).is_err());
    }

    #[test]
    fn invalid_volatility_rejected() {
        let p = GbmParams::single(100.0, 0.0, 0.0, 1);
        assert!(generate_gbm_fixed(&p, &grid(), 1).is_err());
    }
}

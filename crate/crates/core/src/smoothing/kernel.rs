use serde::{Deserialize, Serialize};

use super::SampleSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth<T> {
    /// Silverman's rule of thumb, per input dimension.
    #[default]
    Auto,
    /// Same bandwidth for every input dimension.
    Fixed(T),
}

/// Nadaraya–Watson estimator with a Gaussian product kernel over retained
/// samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSmoother<T> {
    pub bandwidth: Vec<T>,
    pub include_time: bool,
    /// Row-major, `bandwidth.len()` inputs per sample.
    pub points: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> KernelSmoother<T> {
    pub fn dims(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    /// Prediction at `z` and whether it fell back to the nearest sample
    /// because every kernel weight underflowed.
    pub fn predict(&self, z: &[T]) -> (T, bool) {
        let d = self.dims();
        let half = T::of(0.5);
        let mut num = T::zero();
        let mut den = T::zero();
        let mut nearest = (T::infinity(), T::zero());
        for (p, &y) in self.points.chunks_exact(d).zip(&self.y) {
            let q = p
                .iter()
                .zip(z)
                .zip(&self.bandwidth)
                .fold(T::zero(), |acc, ((&xi, &zi), &h)| {
                    let u = (zi - xi) / h;
                    acc + u * u
                });
            if q < nearest.0 {
                nearest = (q, y);
            }
            let w = (-half * q).exp();
            num = num + w * y;
            den = den + w;
        }
        if den > T::zero() {
            (num / den, false)
        } else {
            (nearest.1, true)
        }
    }

    pub fn bounds(&self) -> Vec<(T, T)> {
        let d = self.dims();
        (0..d)
            .map(|j| {
                self.points
                    .chunks_exact(d)
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| {
                        (lo.min(p[j]), hi.max(p[j]))
                    })
            })
            .collect()
    }
}

pub fn fit_kernel<T: Scalar>(
    samples: &SampleSet<T>,
    bandwidth: Bandwidth<T>,
    include_time: bool,
) -> Result<KernelSmoother<T>> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let n = samples.len();
    let mut points = Vec::new();
    let mut buf = Vec::new();
    for i in 0..n {
        samples.input(i, include_time, &mut buf);
        points.extend_from_slice(&buf);
    }
    let d = buf.len();
    let bandwidth = match bandwidth {
        Bandwidth::Fixed(h) => {
            if !(h > T::zero()) || !h.is_finite() {
                return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {h}")));
            }
            vec![h; d]
        }
        Bandwidth::Auto => silverman(&points, d, n),
    };
    Ok(KernelSmoother {
        bandwidth,
        include_time,
        points,
        y: samples.y().to_vec(),
    })
}

/// `h_j = σ_j (4 / ((d + 2) n))^{1/(d+4)}`; constant inputs get `h_j = 1`.
fn silverman<T: Scalar>(points: &[T], d: usize, n: usize) -> Vec<T> {
    let nn = T::of_usize(n);
    let factor = (T::of(4.0) / (T::of_usize(d + 2) * nn)).powf(T::one() / T::of_usize(d + 4));
    (0..d)
        .map(|j| {
            let mean = points.chunks_exact(d).map(|p| p[j]).sum::<T>() / nn;
            let var = if n > 1 {
                points.chunks_exact(d).map(|p| (p[j] - mean).powi(2)).sum::<T>()
                    / T::of_usize(n - 1)
            } else {
                T::zero()
            };
            let h = var.sqrt() * factor;
            if h > T::zero() {
                h
            } else {
                T::one()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::Provenance;

    fn samples(xs: &[f64], ys: &[f64]) -> SampleSet<f64> {
        let mut s = SampleSet::new(1, 0);
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            let p = Provenance {
                scenario: i,
                time_index: 0,
                synthetic: false,
            };
            s.push(0.0, &[x], &[], y, p);
        }
        s
    }

    #[test]
    fn constant_response() {
        let k = fit_kernel(&samples(&[1.0, 2.0, 4.0], &[7.0; 3]), Bandwidth::Auto, false).unwrap();
        for z in [0.0, 1.5, 3.0, 10.0] {
            assert!((k.predict(&[z]).0 - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample() {
        let k = fit_kernel(&samples(&[3.0], &[4.5]), Bandwidth::Auto, false).unwrap();
        assert_eq!(k.predict(&[-100.0]).0, 4.5);
        assert_eq!(k.bandwidth, vec![1.0]);
    }

    #[test]
    fn symmetric_pair() {
        for h in [0.1, 1.0, 25.0] {
            let k = fit_kernel(&samples(&[-1.0, 1.0], &[0.0, 10.0]), Bandwidth::Fixed(h), false)
                .unwrap();
            assert!((k.predict(&[0.0]).0 - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn underflow_falls_back_to_nearest() {
        let k = fit_kernel(&samples(&[0.0, 1.0], &[1.0, 2.0]), Bandwidth::Fixed(1e-3), false)
            .unwrap();
        let (v, fallback) = k.predict(&[50.0]);
        assert!(fallback);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn bad_bandwidth() {
        assert!(fit_kernel(&samples(&[0.0], &[1.0]), Bandwidth::Fixed(0.0), false).is_err());
    }
}

//! Seeded Gaussian measurement noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::rng::{self, domain};
use crate::sinogram::Sinogram;
use crate::spectral::SpectralStats;

/// Noise model: i.i.d. zero-mean Gaussians of variance `variance` added to
/// every sinogram entry, keyed by `(seed, variance, sample_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::config(format!(
                "noise variance must be non-negative, got {variance}"
            )));
        }
        Ok(NoiseSpec { variance, seed })
    }
}

/// The fixed noise realization of sample `sample_index`.
///
/// Each sample has its own ChaCha stream (sub-key = the variance bit pattern,
/// stream = sample index), so realizations are independent across samples and
/// reproducible in isolation.
pub fn sample_noise(spec: &NoiseSpec, geometry: &Geometry, sample_index: u64) -> Sinogram {
    let mut out = Sinogram::zeros(geometry);
    if spec.variance == 0.0 {
        return out;
    }
    let mut rng = rng::stream_rng(
        spec.seed,
        domain::NOISE,
        spec.variance.to_bits(),
        sample_index,
    );
    rng::fill_gaussian(&mut rng, out.as_mut_slice(), spec.variance.sqrt());
    out
}

/// Statistical noise level `delta^2 = max_n Delta_n` of empirical stats.
///
/// For orthonormal data singular vectors and white Gaussian noise the
/// expectation of every `Delta_n` equals the entry variance `s^2`, so the two
/// agree in expectation; both are reported by the experiment exports, and
/// they are not interchangeable for a finite sample.
pub fn noise_level(stats: &SpectralStats) -> Result<f64> {
    if stats.noise_power.is_empty() {
        return Err(Error::config("noise_level of empty stats"));
    }
    Ok(stats
        .noise_power
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_stats(delta: Vec<f64>) -> SpectralStats {
        SpectralStats {
            signal_power: vec![1.0; delta.len()],
            noise_power: delta,
            cross_power: vec![0.0; 3],
            signal_residual: 0.0,
            sample_count: 1,
            noise_variance: 0.0,
        }
    }

    #[test]
    fn zero_variance_is_zero_sinogram() {
        let g = Geometry::new(4, 3, 5).unwrap();
        let spec = NoiseSpec::new(0.0, 9).unwrap();
        let s = sample_noise(&spec, &g, 3);
        assert!(s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn realizations_are_deterministic_and_independent() {
        let g = Geometry::new(4, 3, 5).unwrap();
        let spec = NoiseSpec::new(0.01, 9).unwrap();
        let a = sample_noise(&spec, &g, 3);
        let b = sample_noise(&spec, &g, 3);
        let c = sample_noise(&spec, &g, 4);
        assert_eq!(a.as_slice(), b.as_slice());
        assert_ne!(a.as_slice(), c.as_slice());
    }

    #[test]
    fn empirical_moments_match_variance() {
        let g = Geometry::new(4, 100, 100).unwrap();
        let variance = 0.25;
        let spec = NoiseSpec::new(variance, 17).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for idx in 0..100 {
            let s = sample_noise(&spec, &g, idx);
            for v in s.as_slice() {
                sum += v;
                sum_sq += v * v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sum_sq / count as f64 - mean * mean;
        assert_eq!(count, 1_000_000);
        assert!(mean.abs() < 4.0 * variance.sqrt() / (count as f64).sqrt());
        assert!((var - variance).abs() < 0.01 * variance, "var {var}");
    }

    #[test]
    fn noise_level_is_max_mode_power() {
        assert_eq!(noise_level(&toy_stats(vec![0.1, 0.3, 0.2])).unwrap(), 0.3);
        assert_eq!(noise_level(&toy_stats(vec![0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!(noise_level(&toy_stats(vec![])).is_err());
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(NoiseSpec::new(-0.1, 0).is_err());
    }
}

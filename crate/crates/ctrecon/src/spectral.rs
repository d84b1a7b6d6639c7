//! Spectral regularization in the singular basis.
//!
//! Reconstructions have the form `R(f; g) = sum_n g_n <f, v_n> u_n`. The
//! empirically optimal coefficients minimize the mean squared training error
//! and are available in closed form; classical Tikhonov, truncated-SVD and
//! pseudo-inverse coefficients are special cases with fixed parameters.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::radon::RadonMatrix;
use crate::sinogram::Sinogram;
use crate::svd::OperatorSvd;

/// Per-mode second moments of a sample set in the singular basis.
///
/// With image coefficients `c_in = <u_i, u_n>` and noise coefficients
/// `d_in = <nu_i, v_n>`:
/// `signal_power_n = mean(c^2)`, `noise_power_n = mean(d^2)`,
/// `cross_power_n = mean(c * d)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralStats {
    pub signal_power: Vec<f64>,
    pub noise_power: Vec<f64>,
    pub cross_power: Vec<f64>,
    /// Mean squared image energy outside the span of `U`; a constant term of
    /// the empirical risk (zero when the operator has full column rank).
    pub signal_residual: f64,
    pub sample_count: usize,
    /// The per-entry noise variance the noise realizations were drawn with.
    pub noise_variance: f64,
}

impl SpectralStats {
    pub fn rank(&self) -> usize {
        self.signal_power.len()
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.signal_power.len();
        if self.noise_power.len() != r || self.cross_power.len() != r {
            return Err(Error::Dimension {
                context: "SpectralStats::validate",
                expected: r,
                got: self.noise_power.len().min(self.cross_power.len()),
            });
        }
        for n in 0..r {
            if self.signal_power[n] < 0.0 || self.noise_power[n] < 0.0 {
                return Err(Error::config("negative spectral power"));
            }
            // Cauchy-Schwarz for empirical means
            let bound = (self.signal_power[n] * self.noise_power[n]).sqrt();
            if self.cross_power[n].abs() > bound + 1e-12 * (1.0 + bound) {
                return Err(Error::config(format!(
                    "cross power violates Cauchy-Schwarz at mode {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Empirical spectral statistics of paired samples `(u_i, nu_i)`.
///
/// Samples are processed in fixed blocks of 512 and block results are summed
/// in index order, so the outcome is bit-stable regardless of thread count.
pub fn compute_spectral_stats(
    svd: &OperatorSvd,
    images: &[Image],
    noises: &[Sinogram],
    noise_variance: f64,
) -> Result<SpectralStats> {
    if images.len() != noises.len() {
        return Err(Error::Dimension {
            context: "compute_spectral_stats",
            expected: images.len(),
            got: noises.len(),
        });
    }
    if images.is_empty() {
        return Err(Error::config("spectral stats need at least one sample"));
    }
    let r = svd.rank();
    let n_samples = images.len();
    let mut signal_power = vec![0.0; r];
    let mut noise_power = vec![0.0; r];
    let mut cross_power = vec![0.0; r];
    let mut signal_residual = 0.0;

    const BLOCK: usize = 512;
    let mut start = 0;
    while start < n_samples {
        let end = (start + BLOCK).min(n_samples);
        let block: Vec<(Vec<f64>, Vec<f64>, f64)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let c = svd.image_coefficients(&images[i]);
                let d = svd.data_coefficients(&noises[i]);
                let residual = images[i].norm_squared() - c.iter().map(|x| x * x).sum::<f64>();
                (c, d, residual)
            })
            .collect();
        for (c, d, residual) in &block {
            for n in 0..r {
                signal_power[n] += c[n] * c[n];
                noise_power[n] += d[n] * d[n];
                cross_power[n] += c[n] * d[n];
            }
            signal_residual += residual.max(0.0);
        }
        start = end;
    }

    let inv = 1.0 / n_samples as f64;
    for n in 0..r {
        signal_power[n] *= inv;
        noise_power[n] *= inv;
        cross_power[n] *= inv;
    }
    Ok(SpectralStats {
        signal_power,
        noise_power,
        cross_power,
        signal_residual: signal_residual * inv,
        sample_count: n_samples,
        noise_variance,
    })
}

/// How a coefficient vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSource {
    AnalyticPopulation,
    AnalyticEmpirical,
    Learned,
    Tikhonov { alpha: f64 },
    Tsvd { threshold: f64 },
    PseudoInverse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralCoefficients {
    pub values: Vec<f64>,
    pub source: CoefficientSource,
    pub noise_variance: f64,
}

impl SpectralCoefficients {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Population-optimal coefficients `g_n = sigma_n Pi_n / (sigma_n^2 Pi_n + Delta_n)`;
/// zero whenever the denominator vanishes (the risk is then constant in `g_n`).
pub fn optimal_coefficients_population(
    sigma: &[f64],
    signal_power: &[f64],
    noise_power: &[f64],
) -> Result<SpectralCoefficients> {
    check_lengths("optimal_coefficients_population", sigma, signal_power, noise_power)?;
    if signal_power.iter().chain(noise_power).any(|&p| p < 0.0) {
        return Err(Error::config("powers must be non-negative"));
    }
    let values = sigma
        .iter()
        .zip(signal_power.iter().zip(noise_power))
        .map(|(&s, (&pi, &delta))| {
            let denom = s * s * pi + delta;
            if denom > 0.0 {
                s * pi / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(SpectralCoefficients {
        values,
        source: CoefficientSource::AnalyticPopulation,
        noise_variance: 0.0,
    })
}

/// Exact minimizer of the empirical risk
/// `mean_i sum_n ((1 - sigma_n g_n) c_in - g_n d_in)^2`:
///
/// `g_n = (sigma_n Pi_n + Gamma_n) / (sigma_n^2 Pi_n + Delta_n + 2 sigma_n Gamma_n)`.
///
/// The denominator is `mean <f, v_n>^2 >= 0`; when it vanishes the risk does
/// not depend on `g_n` and the coefficient is set to zero. Negative values
/// are legitimate (the cross term can pull the minimizer below zero).
pub fn optimal_coefficients_empirical(
    sigma: &[f64],
    stats: &SpectralStats,
) -> Result<SpectralCoefficients> {
    stats.validate()?;
    check_lengths(
        "optimal_coefficients_empirical",
        sigma,
        &stats.signal_power,
        &stats.noise_power,
    )?;
    let values = (0..sigma.len())
        .map(|n| {
            let s = sigma[n];
            let pi = stats.signal_power[n];
            let delta = stats.noise_power[n];
            let gamma = stats.cross_power[n];
            let denom = s * s * pi + delta + 2.0 * s * gamma;
            if denom > 0.0 {
                (s * pi + gamma) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(SpectralCoefficients {
        values,
        source: CoefficientSource::AnalyticEmpirical,
        noise_variance: stats.noise_variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalKind {
    Tikhonov { alpha: f64 },
    Tsvd { threshold: f64 },
    PseudoInverse,
}

pub fn classical_coefficients(kind: ClassicalKind, sigma: &[f64]) -> Result<SpectralCoefficients> {
    let (values, source): (Vec<f64>, _) = match kind {
        ClassicalKind::Tikhonov { alpha } => {
            if alpha <= 0.0 {
                return Err(Error::config("tikhonov alpha must be positive"));
            }
            (
                sigma.iter().map(|&s| s / (s * s + alpha)).collect(),
                CoefficientSource::Tikhonov { alpha },
            )
        }
        ClassicalKind::Tsvd { threshold } => {
            if threshold < 0.0 {
                return Err(Error::config("tsvd threshold must be non-negative"));
            }
            (
                sigma
                    .iter()
                    .map(|&s| if s >= threshold { 1.0 / s } else { 0.0 })
                    .collect(),
                CoefficientSource::Tsvd { threshold },
            )
        }
        ClassicalKind::PseudoInverse => (
            sigma.iter().map(|&s| 1.0 / s).collect(),
            CoefficientSource::PseudoInverse,
        ),
    };
    Ok(SpectralCoefficients {
        values,
        source,
        noise_variance: 0.0,
    })
}

/// Production reconstruction through the factored form
/// `A^T (V diag(g / sigma) V^T f)`; algebraically identical to the direct
/// expansion [`reconstruct_spectral_direct`].
pub fn reconstruct_spectral(
    op: &RadonMatrix,
    svd: &OperatorSvd,
    coeffs: &SpectralCoefficients,
    f: &Sinogram,
) -> Result<Image> {
    if coeffs.len() != svd.rank() {
        return Err(Error::Dimension {
            context: "reconstruct_spectral",
            expected: svd.rank(),
            got: coeffs.len(),
        });
    }
    if !f.matches(op.geometry()) {
        return Err(Error::Dimension {
            context: "reconstruct_spectral",
            expected: op.geometry().num_rays(),
            got: f.len(),
        });
    }
    let b = svd.data_coefficients(f);
    let mut filtered = vec![0.0; op.geometry().num_rays()];
    for n in 0..svd.rank() {
        let scale = coeffs.values[n] / svd.sigma()[n];
        let w = scale * b[n];
        if w == 0.0 {
            continue;
        }
        for (o, &vn) in filtered.iter_mut().zip(svd.v().col_as_slice(n)) {
            *o += w * vn;
        }
    }
    let mut out = vec![0.0; op.geometry().num_pixels()];
    op.adjoint_slice(&filtered, &mut out);
    Image::new(op.geometry().image_size, out)
}

/// Direct expansion `sum_n g_n <f, v_n> u_n`; the test oracle for
/// [`reconstruct_spectral`].
pub fn reconstruct_spectral_direct(
    svd: &OperatorSvd,
    coeffs: &SpectralCoefficients,
    f: &Sinogram,
    image_size: usize,
) -> Result<Image> {
    if coeffs.len() != svd.rank() {
        return Err(Error::Dimension {
            context: "reconstruct_spectral_direct",
            expected: svd.rank(),
            got: coeffs.len(),
        });
    }
    let b = svd.data_coefficients(f);
    let c: Vec<f64> = coeffs.values.iter().zip(&b).map(|(g, bn)| g * bn).collect();
    svd.synthesize_image(&c, image_size)
}

/// Empirical risk of a coefficient vector against given stats:
/// `signal_residual + sum_n ((1 - s g)^2 Pi + g^2 Delta - 2 g (1 - s g) Gamma)`.
pub fn empirical_risk(sigma: &[f64], stats: &SpectralStats, g: &[f64]) -> f64 {
    debug_assert_eq!(sigma.len(), g.len());
    let mut acc = stats.signal_residual;
    for n in 0..sigma.len() {
        let damp = 1.0 - sigma[n] * g[n];
        acc += damp * damp * stats.signal_power[n] + g[n] * g[n] * stats.noise_power[n]
            - 2.0 * g[n] * damp * stats.cross_power[n];
    }
    acc
}

/// Minimum achievable expected error, `sum_n Delta_n Pi_n / (sigma_n^2 Pi_n + Delta_n)`;
/// vanishing denominators contribute zero.
pub fn expected_error(sigma: &[f64], signal_power: &[f64], noise_power: &[f64]) -> f64 {
    sigma
        .iter()
        .zip(signal_power.iter().zip(noise_power))
        .map(|(&s, (&pi, &delta))| {
            let denom = s * s * pi + delta;
            if denom > 0.0 {
                delta * pi / denom
            } else {
                0.0
            }
        })
        .sum()
}

/// Per-mode second moments of optimally-reconstructed images:
/// `Pi~_n = (sigma_n^2 Pi_n / (sigma_n^2 Pi_n + Delta_n)) Pi_n <= Pi_n`.
pub fn expected_smoothness(sigma: &[f64], signal_power: &[f64], noise_power: &[f64]) -> Vec<f64> {
    sigma
        .iter()
        .zip(signal_power.iter().zip(noise_power))
        .map(|(&s, (&pi, &delta))| {
            let denom = s * s * pi + delta;
            if denom > 0.0 {
                (s * s * pi / denom) * pi
            } else {
                0.0
            }
        })
        .collect()
}

/// Range-condition diagnostic weights `Delta_n^2 / (Pi_n^2 sigma_n^2)`.
/// Modes with zero signal power report `f64::INFINITY` rather than a silent value.
pub fn range_condition_weights(
    sigma: &[f64],
    signal_power: &[f64],
    noise_power: &[f64],
) -> Vec<f64> {
    sigma
        .iter()
        .zip(signal_power.iter().zip(noise_power))
        .map(|(&s, (&pi, &delta))| {
            if pi > 0.0 && s > 0.0 {
                (delta * delta) / (pi * pi * s * s)
            } else if delta == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Coefficient table export for plotting: one row per mode with the learned
/// coefficient, a fixed-parameter Tikhonov comparator (alpha = median of
/// `Delta_n / Pi_n` over modes with positive signal power) and the
/// range-condition weight.
pub fn export_coefficients_csv<W: Write>(
    mut out: W,
    sigma: &[f64],
    stats: &SpectralStats,
    coeffs: &SpectralCoefficients,
) -> Result<()> {
    let mut ratios: Vec<f64> = stats
        .signal_power
        .iter()
        .zip(&stats.noise_power)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, delta)| delta / pi)
        .collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = if ratios.is_empty() {
        0.0
    } else {
        ratios[ratios.len() / 2]
    };
    let weights = range_condition_weights(sigma, &stats.signal_power, &stats.noise_power);
    writeln!(
        out,
        "n,sigma_n,Pi_n,Delta_n,Gamma_n,g_n,g_tikhonov,weight_range_condition"
    )?;
    for n in 0..sigma.len() {
        let s = sigma[n];
        let tik = if alpha > 0.0 { s / (s * s + alpha) } else { 1.0 / s };
        writeln!(
            out,
            "{n},{s},{},{},{},{},{tik},{}",
            stats.signal_power[n],
            stats.noise_power[n],
            stats.cross_power[n],
            coeffs.values[n],
            weights[n],
        )?;
    }
    Ok(())
}

fn check_lengths(context: &'static str, sigma: &[f64], a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != sigma.len() || b.len() != sigma.len() {
        return Err(Error::Dimension {
            context,
            expected: sigma.len(),
            got: a.len().min(b.len()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use crate::radon::build_operator;
    use crate::rng::{self, domain};
    use crate::svd::{compute_svd, SvdOptions};

    fn toy_stats(pi: Vec<f64>, delta: Vec<f64>, gamma: Vec<f64>) -> SpectralStats {
        SpectralStats {
            signal_power: pi,
            noise_power: delta,
            cross_power: gamma,
            signal_residual: 0.0,
            sample_count: 1,
            noise_variance: 0.0,
        }
    }

    #[test]
    fn population_coefficients_special_cases() {
        let g = optimal_coefficients_population(&[2.0, 0.5], &[1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!((g.values[0] - 0.5).abs() < 1e-15);
        assert!((g.values[1] - 2.0).abs() < 1e-15);
        let g = optimal_coefficients_population(&[2.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(g.values[0], 0.0);
        let g = optimal_coefficients_population(&[1.0], &[1.0], &[1.0]).unwrap();
        assert!((g.values[0] - 0.5).abs() < 1e-15);
        assert!(optimal_coefficients_population(&[1.0], &[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn empirical_reduces_to_population_when_cross_is_zero() {
        let sigma = [1.5, 0.7, 0.2];
        let stats = toy_stats(vec![2.0, 1.0, 0.1], vec![0.3, 0.3, 0.3], vec![0.0; 3]);
        let emp = optimal_coefficients_empirical(&sigma, &stats).unwrap();
        let pop =
            optimal_coefficients_population(&sigma, &stats.signal_power, &stats.noise_power)
                .unwrap();
        for (a, b) in emp.values.iter().zip(&pop.values) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_minimizer_beats_grid_search() {
        // single-sample toy case: c and d known exactly, so the risk is the
        // literal squared error and the grid search is an independent oracle
        let sigma = [1.3, 0.4];
        let c = [0.8, -0.5];
        let d = [0.3, -0.1];
        let stats = toy_stats(
            c.iter().map(|x| x * x).collect(),
            d.iter().map(|x| x * x).collect(),
            c.iter().zip(&d).map(|(x, y)| x * y).collect(),
        );
        let g = optimal_coefficients_empirical(&sigma, &stats).unwrap();
        for n in 0..2 {
            let risk = |gn: f64| {
                let r = (1.0 - sigma[n] * gn) * c[n] - gn * d[n];
                r * r
            };
            let closed = risk(g.values[n]);
            let mut best = f64::INFINITY;
            let mut best_g = 0.0;
            let mut x = -5.0;
            while x <= 5.0 {
                let v = risk(x);
                if v < best {
                    best = v;
                    best_g = x;
                }
                x += 1e-4;
            }
            assert!(closed <= best + 1e-6 * (1.0 + best));
            assert!((best_g - g.values[n]).abs() < 1e-3);
        }
    }

    #[test]
    fn empirical_fully_correlated_noise() {
        // noise coefficient identical to the signal coefficient: data is
        // 2 sigma c, so g = 0.5/sigma zeroes the risk entirely
        let stats = toy_stats(vec![1.0], vec![1.0], vec![1.0]);
        let g = optimal_coefficients_empirical(&[1.0], &stats).unwrap();
        assert!((g.values[0] - 0.5).abs() < 1e-15);
        assert!(empirical_risk(&[1.0], &stats, &g.values).abs() < 1e-15);
        // and the zero-denominator convention
        let degenerate = toy_stats(vec![0.0], vec![0.0], vec![0.0]);
        let g = optimal_coefficients_empirical(&[1.0], &degenerate).unwrap();
        assert_eq!(g.values[0], 0.0);
    }

    #[test]
    fn tikhonov_form_recovery_is_exact() {
        let sigma: Vec<f64> = (1..40).map(|n| 1.0 / n as f64).collect();
        let pi = 0.7;
        let delta_sq = 3e-3;
        let g = optimal_coefficients_population(
            &sigma,
            &vec![pi; sigma.len()],
            &vec![delta_sq; sigma.len()],
        )
        .unwrap();
        for (s, gn) in sigma.iter().zip(&g.values) {
            let tik = s / (s * s + delta_sq / pi);
            assert!((gn - tik).abs() <= 1e-14 * tik.abs());
        }
    }

    #[test]
    fn boundedness_under_noise_floor() {
        // Delta_n >= c delta^2 Pi_n for n >= n0 forces
        // g_n <= max(1/sigma_n0, 1/(2 sqrt(c) delta))
        let sigma: Vec<f64> = (0..50).map(|n| 2.0 * 0.8f64.powi(n)).collect();
        let pi: Vec<f64> = (0..50).map(|n| 0.9f64.powi(n)).collect();
        let c = 0.5;
        let delta_level: f64 = 0.1;
        let n0 = 5;
        let delta: Vec<f64> = (0..50)
            .map(|n| {
                if n >= n0 {
                    1.7 * c * delta_level * delta_level * pi[n]
                } else {
                    0.0
                }
            })
            .collect();
        let g = optimal_coefficients_population(&sigma, &pi, &delta).unwrap();
        let bound = (1.0 / sigma[n0]).max(1.0 / (2.0 * c.sqrt() * delta_level));
        for gn in &g.values {
            assert!(*gn <= bound + 1e-12, "g {gn} exceeds bound {bound}");
        }
    }

    #[test]
    fn classical_limits() {
        let sigma = [2.0, 1.0, 0.25];
        let pinv = classical_coefficients(ClassicalKind::PseudoInverse, &sigma).unwrap();
        let tik = classical_coefficients(ClassicalKind::Tikhonov { alpha: 1e-14 }, &sigma).unwrap();
        let tsvd0 = classical_coefficients(ClassicalKind::Tsvd { threshold: 0.0 }, &sigma).unwrap();
        for n in 0..3 {
            assert!((pinv.values[n] - 1.0 / sigma[n]).abs() < 1e-15);
            assert!((tik.values[n] - pinv.values[n]).abs() < 1e-12);
            assert_eq!(tsvd0.values[n], pinv.values[n]);
        }
        let tik = classical_coefficients(ClassicalKind::Tikhonov { alpha: 1.0 }, &[1.0]).unwrap();
        assert!((tik.values[0] - 0.5).abs() < 1e-15);
        let tsvd = classical_coefficients(ClassicalKind::Tsvd { threshold: 0.5 }, &sigma).unwrap();
        assert_eq!(tsvd.values[2], 0.0);
        assert!(classical_coefficients(ClassicalKind::Tikhonov { alpha: -1.0 }, &sigma).is_err());
    }

    #[test]
    fn stats_trivial_cases() {
        let g = Geometry::new(4, 8, 6).unwrap();
        let op = build_operator(&g).unwrap();
        let svd = compute_svd(&op, SvdOptions::default()).unwrap();

        // zero noises
        let images = vec![crate::phantom::generate_phantom(
            3,
            0,
            &crate::phantom::GeneratorParams::default(),
            4,
        )
        .unwrap()];
        let noises = vec![Sinogram::zeros(&g)];
        let stats = compute_spectral_stats(&svd, &images, &noises, 0.0).unwrap();
        assert!(stats.noise_power.iter().all(|&d| d == 0.0));
        assert!(stats.cross_power.iter().all(|&c| c == 0.0));

        // u equal to the first singular vector
        let u1 = Image::new(4, svd.u().col_as_slice(0).to_vec()).unwrap();
        let stats = compute_spectral_stats(&svd, &[u1], &noises, 0.0).unwrap();
        assert!((stats.signal_power[0] - 1.0).abs() < 1e-12);
        for n in 1..svd.rank() {
            assert!(stats.signal_power[n].abs() < 1e-20);
        }
        assert!(stats.signal_residual.abs() < 1e-12);
        stats.validate().unwrap();
    }

    #[test]
    fn stats_match_hand_computed_sums() {
        let g = Geometry::new(4, 8, 6).unwrap();
        let op = build_operator(&g).unwrap();
        let svd = compute_svd(&op, SvdOptions::default()).unwrap();
        let mut rng = rng::stream_rng(8, domain::TEST, 0, 0);
        let mut images = Vec::new();
        let mut noises = Vec::new();
        for _ in 0..2 {
            let mut u = vec![0.0; 16];
            let mut f = vec![0.0; g.num_rays()];
            rng::fill_gaussian(&mut rng, &mut u, 1.0);
            rng::fill_gaussian(&mut rng, &mut f, 1.0);
            images.push(Image::new(4, u).unwrap());
            noises.push(Sinogram::new(g.num_angles, g.num_positions, f).unwrap());
        }
        let stats = compute_spectral_stats(&svd, &images, &noises, 1.0).unwrap();
        for n in (0..svd.rank()).step_by(5) {
            let mut pi = 0.0;
            let mut delta = 0.0;
            let mut gamma = 0.0;
            for i in 0..2 {
                let c: f64 = svd
                    .u()
                    .col_as_slice(n)
                    .iter()
                    .zip(images[i].as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                let d: f64 = svd
                    .v()
                    .col_as_slice(n)
                    .iter()
                    .zip(noises[i].as_slice())
                    .map(|(a, b)| a * b)
                    .sum();
                pi += c * c / 2.0;
                delta += d * d / 2.0;
                gamma += c * d / 2.0;
            }
            assert!((stats.signal_power[n] - pi).abs() < 1e-12);
            assert!((stats.noise_power[n] - delta).abs() < 1e-12);
            assert!((stats.cross_power[n] - gamma).abs() < 1e-12);
        }
        stats.validate().unwrap();
    }

    #[test]
    fn stats_count_mismatch_rejected() {
        let g = Geometry::new(4, 8, 6).unwrap();
        let op = build_operator(&g).unwrap();
        let svd = compute_svd(&op, SvdOptions::default()).unwrap();
        let r = compute_spectral_stats(&svd, &[Image::zeros(4)], &[], 0.0);
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn reconstruction_forms_agree_and_invert_on_range() {
        let g = Geometry::new(6, 12, 9).unwrap();
        let op = build_operator(&g).unwrap();
        let svd = compute_svd(&op, SvdOptions::default()).unwrap();
        let pinv = classical_coefficients(ClassicalKind::PseudoInverse, svd.sigma()).unwrap();

        let mut rng = rng::stream_rng(4, domain::TEST, 0, 0);
        let mut raw = vec![0.0; g.num_pixels()];
        rng::fill_gaussian(&mut rng, &mut raw, 1.0);
        // project onto span(U) so exact inversion applies
        let coeffs = svd.image_coefficients(&Image::new(6, raw).unwrap());
        let u = svd.synthesize_image(&coeffs, 6).unwrap();
        let f = op.forward(&u).unwrap();
        let recon = reconstruct_spectral(&op, &svd, &pinv, &f).unwrap();
        let err: f64 = recon
            .as_slice()
            .iter()
            .zip(u.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-8 * u.norm().max(1.0), "inversion error {err}");

        // dual-path agreement on random data
        let mut fraw = vec![0.0; g.num_rays()];
        rng::fill_gaussian(&mut rng, &mut fraw, 1.0);
        let f = Sinogram::new(g.num_angles, g.num_positions, fraw).unwrap();
        let a = reconstruct_spectral(&op, &svd, &pinv, &f).unwrap();
        let b = reconstruct_spectral_direct(&svd, &pinv, &f, 6).unwrap();
        let diff = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(diff <= 1e-10 * f.norm(), "forms differ by {diff}");

        // zero coefficients give the zero image
        let zero = SpectralCoefficients {
            values: vec![0.0; svd.rank()],
            source: CoefficientSource::Learned,
            noise_variance: 0.0,
        };
        let z = reconstruct_spectral(&op, &svd, &zero, &f).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expected_error_cases_and_monte_carlo() {
        assert_eq!(expected_error(&[1.0, 2.0], &[1.0, 1.0], &[0.0, 0.0]), 0.0);
        assert!((expected_error(&[1.0], &[1.0], &[1.0]) - 0.5).abs() < 1e-15);

        // Monte-Carlo oracle on a random 5-mode instance
        let sigma = [1.7, 0.9, 0.45, 0.2, 0.05];
        let pi = [2.0, 1.1, 0.6, 0.2, 0.05];
        let delta = [0.01, 0.02, 0.015, 0.01, 0.012];
        let g = optimal_coefficients_population(&sigma, &pi, &delta).unwrap();
        let closed = expected_error(&sigma, &pi, &delta);

        let mut rng = rng::stream_rng(13, domain::TEST, 0, 0);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut pair = [0.0; 2];
        for _ in 0..draws {
            let mut err = 0.0;
            for n in 0..5 {
                rng::fill_gaussian(&mut rng, &mut pair, 1.0);
                let c = pair[0] * pi[n].sqrt();
                let d = pair[1] * delta[n].sqrt();
                let r = (1.0 - sigma[n] * g.values[n]) * c - g.values[n] * d;
                err += r * r;
            }
            sum += err;
            sum_sq += err * err;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - closed).abs() <= 3.0 * se,
            "MC {mean} vs closed {closed}, se {se}"
        );
    }

    #[test]
    fn smoothness_and_range_weights() {
        let s = expected_smoothness(&[1.0], &[2.0], &[2.0]);
        assert!((s[0] - 1.0).abs() < 1e-15);
        let s = expected_smoothness(&[2.0, 1.0], &[1.0, 3.0], &[0.0, 0.0]);
        assert_eq!(s, vec![1.0, 3.0]);
        let s = expected_smoothness(&[0.0], &[1.0], &[0.5]);
        assert_eq!(s[0], 0.0);
        // Pi~ <= Pi always
        for n in 0..20 {
            let pi = 0.1 + n as f64;
            let tilde = expected_smoothness(&[0.3], &[pi], &[0.7]);
            assert!(tilde[0] <= pi);
        }

        let w = range_condition_weights(&[1.0, 1.0, 2.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]);
        assert_eq!(w[0], 1.0);
        assert!(w[1].is_infinite());
        assert_eq!(w[2], 0.0);
        // white noise shape: delta^4 / (Pi^2 sigma^2)
        let d2 = 0.3f64;
        let w = range_condition_weights(&[0.5], &[2.0], &[d2]);
        assert!((w[0] - d2 * d2 / (4.0 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn optimality_against_random_perturbations() {
        let mut rng = rng::stream_rng(21, domain::TEST, 0, 0);
        for _ in 0..50 {
            let r = 6;
            let mut sigma = vec![0.0; r];
            let mut pi = vec![0.0; r];
            let mut delta = vec![0.0; r];
            for n in 0..r {
                sigma[n] = 0.05 + 2.0 * rng::uniform(&mut rng);
                pi[n] = 2.0 * rng::uniform(&mut rng);
                delta[n] = rng::uniform(&mut rng);
            }
            let stats = toy_stats(pi.clone(), delta.clone(), vec![0.0; r]);
            let g = optimal_coefficients_population(&sigma, &pi, &delta).unwrap();
            let base = empirical_risk(&sigma, &stats, &g.values);
            assert!(
                (base - expected_error(&sigma, &pi, &delta)).abs() <= 1e-12 * (1.0 + base),
                "risk identity violated"
            );
            for _ in 0..20 {
                let perturbed: Vec<f64> = g
                    .values
                    .iter()
                    .map(|v| v + 0.5 * (rng::uniform(&mut rng) - 0.5))
                    .collect();
                assert!(empirical_risk(&sigma, &stats, &perturbed) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn csv_export_shape() {
        let stats = toy_stats(vec![1.0, 0.5], vec![0.1, 0.1], vec![0.0, 0.0]);
        let g = optimal_coefficients_empirical(&[1.0, 0.5], &stats).unwrap();
        let mut buf = Vec::new();
        export_coefficients_csv(&mut buf, &[1.0, 0.5], &stats, &g).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("n,sigma_n,Pi_n,Delta_n,Gamma_n"));
    }
}

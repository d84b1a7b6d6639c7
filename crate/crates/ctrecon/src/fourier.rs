//! Filtered back-projection in the DFT domain.
//!
//! Sinogram rows (one per angle) are transformed with a unitary 1-D DFT,
//! multiplied by a real filter, transformed back, and back-projected with the
//! continuously-scaled adjoint. Filters are real-valued; a filter marked
//! `ramp_relative` stores the deviation from the ramp `|r|` and is multiplied
//! by the ramp (or composed with a trained pseudo-ramp) before use in
//! reconstruction.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::image::Image;
use crate::radon::RadonMatrix;
use crate::sinogram::Sinogram;

/// Cached unitary DFT plans for rows of a fixed length.
#[derive(Clone)]
pub struct RowDft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl RowDft {
    pub fn new(num_positions: usize) -> Self {
        let mut planner = FftPlanner::new();
        RowDft {
            forward: planner.plan_fft_forward(num_positions),
            inverse: planner.plan_fft_inverse(num_positions),
            len: num_positions,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unitary per-row forward DFT of `num_rows` contiguous rows.
    pub fn forward_rows(&self, values: &[f64], num_rows: usize) -> Vec<Complex<f64>> {
        debug_assert_eq!(values.len(), num_rows * self.len);
        let scale = 1.0 / (self.len as f64).sqrt();
        let mut spectrum: Vec<Complex<f64>> =
            values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in spectrum.chunks_exact_mut(self.len) {
            self.forward.process(row);
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        spectrum
    }

    /// Unitary per-row inverse DFT; returns the real parts and the largest
    /// absolute imaginary residue encountered.
    pub fn inverse_rows_real(&self, mut spectrum: Vec<Complex<f64>>) -> (Vec<f64>, f64) {
        let scale = 1.0 / (self.len as f64).sqrt();
        let mut residue = 0.0f64;
        let mut out = Vec::with_capacity(spectrum.len());
        for row in spectrum.chunks_exact_mut(self.len) {
            self.inverse.process(row);
            for v in row.iter() {
                let val = *v * scale;
                residue = residue.max(val.im.abs());
                out.push(val.re);
            }
        }
        (out, residue)
    }
}

/// Per-angle unitary DFT of a sinogram, as a `K x L` angle-major complex grid.
pub fn sinogram_dft(f: &Sinogram) -> Vec<Complex<f64>> {
    RowDft::new(f.num_positions()).forward_rows(f.as_slice(), f.num_angles())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ramp,
    Hamming,
    PseudoRamp,
    AnalyticEmpirical,
    Learned,
}

/// A real filter on the per-angle DFT frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFilter {
    num_angles: usize,
    num_positions: usize,
    /// `K x L` angle-major filter values. [`apply_filter`] multiplies spectra
    /// by these values as stored.
    values: Vec<f64>,
    /// All angle rows identical.
    pub angle_constant: bool,
    /// Values are relative to the ramp: the reconstruction multiplier is
    /// `values * |r|` (or `values * pseudo_ramp` after [`compose`](Self::compose)).
    pub ramp_relative: bool,
    pub kind: FilterKind,
}

impl FourierFilter {
    pub fn new(
        geometry: &Geometry,
        values: Vec<f64>,
        angle_constant: bool,
        ramp_relative: bool,
        kind: FilterKind,
    ) -> Result<Self> {
        if values.len() != geometry.num_rays() {
            return Err(Error::Dimension {
                context: "FourierFilter::new",
                expected: geometry.num_rays(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::format("filter", format!("non-finite value {bad}")));
        }
        Ok(FourierFilter {
            num_angles: geometry.num_angles,
            num_positions: geometry.num_positions,
            values,
            angle_constant,
            ramp_relative,
            kind,
        })
    }

    /// Replicate one frequency profile across all angles.
    pub fn from_angle_profile(
        geometry: &Geometry,
        profile: &[f64],
        ramp_relative: bool,
        kind: FilterKind,
    ) -> Result<Self> {
        if profile.len() != geometry.num_positions {
            return Err(Error::Dimension {
                context: "FourierFilter::from_angle_profile",
                expected: geometry.num_positions,
                got: profile.len(),
            });
        }
        let mut values = Vec::with_capacity(geometry.num_rays());
        for _ in 0..geometry.num_angles {
            values.extend_from_slice(profile);
        }
        Self::new(geometry, values, true, ramp_relative, kind)
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_positions(&self) -> usize {
        self.num_positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_positions..(k + 1) * self.num_positions]
    }

    pub fn matches(&self, geometry: &Geometry) -> bool {
        self.num_angles == geometry.num_angles && self.num_positions == geometry.num_positions
    }

    /// The multiplier used in reconstruction: `values * |r|` for
    /// ramp-relative filters, the raw values otherwise.
    pub fn reconstruction_multiplier(&self, geometry: &Geometry) -> Vec<f64> {
        if !self.ramp_relative {
            return self.values.clone();
        }
        let mut out = self.values.clone();
        for k in 0..self.num_angles {
            for j in 0..self.num_positions {
                out[k * self.num_positions + j] *= geometry.frequency(j).abs();
            }
        }
        out
    }

    /// Pointwise product of two filters. The result is absolute (multiplier
    /// form) unless both inputs are ramp-relative; provenance follows `self`.
    pub fn compose(&self, other: &FourierFilter) -> Result<FourierFilter> {
        if self.num_angles != other.num_angles || self.num_positions != other.num_positions {
            return Err(Error::Dimension {
                context: "FourierFilter::compose",
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(FourierFilter {
            num_angles: self.num_angles,
            num_positions: self.num_positions,
            values,
            angle_constant: self.angle_constant && other.angle_constant,
            ramp_relative: self.ramp_relative && other.ramp_relative,
            kind: self.kind,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalFilterKind {
    Ramp,
    Hamming,
}

/// The ramp `|r|` on the physical frequency grid, or the ramp windowed by a
/// Hamming window over `[0, r_max]` (`0.54 + 0.46 cos(pi r / r_max)`).
pub fn classical_filter(kind: ClassicalFilterKind, geometry: &Geometry) -> FourierFilter {
    let l = geometry.num_positions;
    let r_max = geometry.max_frequency();
    let profile: Vec<f64> = (0..l)
        .map(|j| {
            let r = geometry.frequency(j).abs();
            match kind {
                ClassicalFilterKind::Ramp => r,
                ClassicalFilterKind::Hamming => {
                    r * (0.54 + 0.46 * (std::f64::consts::PI * r / r_max).cos())
                }
            }
        })
        .collect();
    let filter_kind = match kind {
        ClassicalFilterKind::Ramp => FilterKind::Ramp,
        ClassicalFilterKind::Hamming => FilterKind::Hamming,
    };
    FourierFilter::from_angle_profile(geometry, &profile, false, filter_kind)
        .expect("profile length matches geometry by construction")
}

/// Multiply the per-angle spectrum of `f` by the filter values as stored and
/// transform back. The imaginary residue is discarded (it is at rounding
/// level for the Hermitian-symmetric filters produced by this crate).
pub fn apply_filter(f: &Sinogram, filter: &FourierFilter) -> Result<Sinogram> {
    let (out, _) = apply_filter_with_residue(f, filter)?;
    Ok(out)
}

/// Like [`apply_filter`], also reporting the largest imaginary residue.
pub fn apply_filter_with_residue(
    f: &Sinogram,
    filter: &FourierFilter,
) -> Result<(Sinogram, f64)> {
    if f.num_angles() != filter.num_angles || f.num_positions() != filter.num_positions {
        return Err(Error::Dimension {
            context: "apply_filter",
            expected: filter.values.len(),
            got: f.len(),
        });
    }
    let dft = RowDft::new(f.num_positions());
    let values = filter_rows(&dft, f.as_slice(), f.num_angles(), &filter.values);
    let (values, residue) = dft.inverse_rows_real(values);
    Ok((
        Sinogram::new(f.num_angles(), f.num_positions(), values)?,
        residue,
    ))
}

pub(crate) fn filter_rows(
    dft: &RowDft,
    values: &[f64],
    num_rows: usize,
    multiplier: &[f64],
) -> Vec<Complex<f64>> {
    let mut spectrum = dft.forward_rows(values, num_rows);
    for (v, m) in spectrum.iter_mut().zip(multiplier) {
        *v *= m;
    }
    spectrum
}

/// Filtered back-projection `adjoint_factor * A^T (F^-1 (rho . F f))` with the
/// filter's reconstruction multiplier.
pub fn fbp_reconstruct(
    op: &RadonMatrix,
    filter: &FourierFilter,
    f: &Sinogram,
) -> Result<Image> {
    let geometry = op.geometry();
    if !f.matches(geometry) || !filter.matches(geometry) {
        return Err(Error::Dimension {
            context: "fbp_reconstruct",
            expected: geometry.num_rays(),
            got: f.len(),
        });
    }
    let multiplier = filter.reconstruction_multiplier(geometry);
    let dft = RowDft::new(geometry.num_positions);
    let spectrum = filter_rows(&dft, f.as_slice(), geometry.num_angles, &multiplier);
    let (filtered, _) = dft.inverse_rows_real(spectrum);
    let mut out = vec![0.0; geometry.num_pixels()];
    op.adjoint_slice(&filtered, &mut out);
    let scale = geometry.scaling().adjoint_factor;
    for v in &mut out {
        *v *= scale;
    }
    Image::new(geometry.image_size, out)
}

/// Per-bin second moments of sinogram spectra.
///
/// With clean spectra `a_i = F(A u_i)` and noise spectra `e_i = F(nu_i)`:
/// `signal_power = mean |a|^2`, `noise_power = mean |e|^2`,
/// `cross_power = mean (a conj(e) + conj(a) e) = 2 mean Re(a conj(e))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FourierStats {
    pub num_angles: usize,
    pub num_positions: usize,
    pub signal_power: Vec<f64>,
    pub noise_power: Vec<f64>,
    pub cross_power: Vec<f64>,
    pub sample_count: usize,
    pub noise_variance: f64,
}

/// Empirical Fourier statistics of paired samples. Fixed 512-sample blocks
/// accumulated in index order keep the result bit-stable under parallelism.
pub fn compute_fourier_stats(
    clean: &[Sinogram],
    noises: &[Sinogram],
    noise_variance: f64,
) -> Result<FourierStats> {
    use rayon::prelude::*;

    if clean.len() != noises.len() {
        return Err(Error::Dimension {
            context: "compute_fourier_stats",
            expected: clean.len(),
            got: noises.len(),
        });
    }
    if clean.is_empty() {
        return Err(Error::config("fourier stats need at least one sample"));
    }
    let k = clean[0].num_angles();
    let l = clean[0].num_positions();
    let bins = k * l;
    let dft = RowDft::new(l);
    let mut signal_power = vec![0.0; bins];
    let mut noise_power = vec![0.0; bins];
    let mut cross_power = vec![0.0; bins];

    const BLOCK: usize = 512;
    let mut start = 0;
    while start < clean.len() {
        let end = (start + BLOCK).min(clean.len());
        let block: Vec<(Vec<Complex<f64>>, Vec<Complex<f64>>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                (
                    dft.forward_rows(clean[i].as_slice(), k),
                    dft.forward_rows(noises[i].as_slice(), k),
                )
            })
            .collect();
        for (a, e) in &block {
            for j in 0..bins {
                signal_power[j] += a[j].norm_sqr();
                noise_power[j] += e[j].norm_sqr();
                cross_power[j] += 2.0 * (a[j] * e[j].conj()).re;
            }
        }
        start = end;
    }
    let inv = 1.0 / clean.len() as f64;
    for j in 0..bins {
        signal_power[j] *= inv;
        noise_power[j] *= inv;
        cross_power[j] *= inv;
    }
    Ok(FourierStats {
        num_angles: k,
        num_positions: l,
        signal_power,
        noise_power,
        cross_power,
        sample_count: clean.len(),
    noise_variance,
    })
}

/// Exact per-bin minimizer of the empirical Fourier-domain risk
/// `mean |a - psi (a + e)|^2`, expressed with the stats above:
///
/// `psi = (Pi + Gamma/2) / (Pi + Delta + Gamma)`.
///
/// The denominator is `mean |a + e|^2 >= 0`; bins where it vanishes carry no
/// data and get `psi = 0`. The result is ramp-relative (`psi = rho / |r|`).
pub fn analytic_filter_empirical(stats: &FourierStats) -> FourierFilter {
    let values: Vec<f64> = (0..stats.signal_power.len())
        .map(|j| {
            let pi = stats.signal_power[j];
            let delta = stats.noise_power[j];
            let gamma = stats.cross_power[j];
            let denom = pi + delta + gamma;
            if denom > 0.0 {
                (pi + gamma / 2.0) / denom
            } else {
                0.0
            }
        })
        .collect();
    FourierFilter {
        num_angles: stats.num_angles,
        num_positions: stats.num_positions,
        values,
        angle_constant: false,
        ramp_relative: true,
        kind: FilterKind::AnalyticEmpirical,
    }
}

/// Expected per-bin second moments of optimally filtered spectra,
/// `(Pi / (Pi + Delta)) Pi`.
pub fn expected_smoothness_fourier(stats: &FourierStats) -> Vec<f64> {
    stats
        .signal_power
        .iter()
        .zip(&stats.noise_power)
        .map(|(&pi, &delta)| {
            let denom = pi + delta;
            if denom > 0.0 {
                (pi / denom) * pi
            } else {
                0.0
            }
        })
        .collect()
}

/// Arithmetic mean of the filter over angles, replicated back to all rows.
pub fn angle_average(filter: &FourierFilter) -> FourierFilter {
    let k = filter.num_angles;
    let l = filter.num_positions;
    let mut profile = vec![0.0; l];
    for row in filter.values.chunks_exact(l) {
        for (p, v) in profile.iter_mut().zip(row) {
            *p += v / k as f64;
        }
    }
    let mut values = Vec::with_capacity(k * l);
    for _ in 0..k {
        values.extend_from_slice(&profile);
    }
    FourierFilter {
        num_angles: k,
        num_positions: l,
        values,
        angle_constant: true,
        ramp_relative: filter.ramp_relative,
        kind: filter.kind,
    }
}

/// Filter table export: one row per (angle, frequency) with both the
/// ramp-relative value `psi` and the absolute multiplier `rho = psi * |r|`.
pub fn export_filter_csv<W: Write>(
    mut out: W,
    filter: &FourierFilter,
    geometry: &Geometry,
) -> Result<()> {
    writeln!(out, "angle_index,frequency_r,psi,rho")?;
    for k in 0..filter.num_angles {
        for j in 0..filter.num_positions {
            let r = geometry.frequency(j);
            let v = filter.values[k * filter.num_positions + j];
            let (psi, rho) = if filter.ramp_relative {
                (v, v * r.abs())
            } else if r != 0.0 {
                (v / r.abs(), v)
            } else {
                (0.0, v)
            };
            writeln!(out, "{k},{r},{psi},{rho}")?;
        }
    }
    Ok(())
}

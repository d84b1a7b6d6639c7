//! Reconstruction quality metrics: MSE, PSNR and SSIM.

use crate::error::{Error, Result};
use crate::image::Image;

/// Mean squared per-pixel difference.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "mse",
            expected: a.len(),
            got: b.len(),
        });
    }
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio in dB; identical images report `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if peak <= 0.0 {
        return Err(Error::config("psnr peak must be positive"));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

/// Mean structural similarity with the standard parameterization: 11x11
/// Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.0.
/// The local map is evaluated at every window position fully inside the image.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if a.len() != b.len() || a.size() != b.size() {
        return Err(Error::Dimension {
            context: "ssim",
            expected: a.len(),
            got: b.len(),
        });
    }
    let size = a.size();
    if size < SSIM_WINDOW {
        return Err(Error::config(format!(
            "ssim needs images of at least {SSIM_WINDOW} pixels per side, got {size}"
        )));
    }
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * SSIM_RANGE) * (SSIM_K1 * SSIM_RANGE);
    let c2 = (SSIM_K2 * SSIM_RANGE) * (SSIM_K2 * SSIM_RANGE);

    let valid = size - SSIM_WINDOW + 1;
    let mut acc = 0.0;
    for wy in 0..valid {
        for wx in 0..valid {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let w = kernel[ky * SSIM_WINDOW + kx];
                    let va = a.get(wx + kx, wy + ky);
                    let vb = b.get(wx + kx, wy + ky);
                    mu_a += w * va;
                    mu_b += w * vb;
                    aa += w * va * va;
                    bb += w * vb * vb;
                    ab += w * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
        }
    }
    Ok(acc / (valid * valid) as f64)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut kernel = Vec::with_capacity(size * size);
    let mut sum = 0.0;
    for y in -half..=half {
        for x in -half..=half {
            let v = (-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp();
            kernel.push(v);
            sum += v;
        }
    }
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

//! Discrete Radon transform under the piecewise-constant (Spline-0) pixel
//! model: matrix entry (ray, pixel) = exact Euclidean length of the ray's
//! intersection with the pixel square, computed by parametric line/box
//! clipping. No quadrature is involved, so forward and adjoint are exact
//! transposes of each other.

use std::io::Write;

use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::image::Image;
use crate::sinogram::Sinogram;

/// Sparse ray/pixel intersection matrix of shape `(K*L) x I^2`, stored both
/// row-compressed (forward) and column-compressed (adjoint). Immutable after
/// construction; all products are pure.
#[derive(Debug, Clone)]
pub struct RadonMatrix {
    geometry: Geometry,
    row_offsets: Vec<usize>,
    row_cols: Vec<u32>,
    row_vals: Vec<f64>,
    col_offsets: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<f64>,
}

/// Length of the intersection of the line `p0 + t*d` (|d| = 1) with an
/// axis-aligned box, via Liang-Barsky clipping.
///
/// Axis-parallel lines exactly on a pixel boundary belong to the upper
/// neighbor only (half-open boxes along the degenerate axis); otherwise the
/// shared edge would be integrated twice.
fn clip_length(p0: (f64, f64), d: (f64, f64), x: (f64, f64), y: (f64, f64)) -> f64 {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (p, dir, (lo, hi)) in [(p0.0, d.0, x), (p0.1, d.1, y)] {
        if dir.abs() < 1e-14 {
            if p < lo || p >= hi {
                return 0.0;
            }
        } else {
            let ta = (lo - p) / dir;
            let tb = (hi - p) / dir;
            let (tmin, tmax) = if ta < tb { (ta, tb) } else { (tb, ta) };
            t_enter = t_enter.max(tmin);
            t_exit = t_exit.min(tmax);
        }
    }
    (t_exit - t_enter).max(0.0)
}

/// All positive-length pixel intersections of ray `(k, l)`.
fn ray_entries(geometry: &Geometry, k: usize, l: usize) -> Vec<(u32, f64)> {
    let i = geometry.image_size;
    let w = geometry.pixel_width();
    let theta = geometry.angle(k);
    let s = geometry.position(l);
    let (sin, cos) = theta.sin_cos();
    let normal = (-sin, cos);
    let dir = (cos, sin);
    let p0 = (s * normal.0, s * normal.1);
    // a pixel can only meet the line if its center is within the square's
    // support radius in the normal direction
    let support = (normal.0.abs() + normal.1.abs()) * w / 2.0;

    let mut entries = Vec::new();
    for iy in 0..i {
        let yc = -0.5 + (iy as f64 + 0.5) * w;
        let (ix_lo, ix_hi) = if normal.0.abs() > 1e-12 {
            let budget = s - yc * normal.1;
            let a = (budget - support) / normal.0;
            let b = (budget + support) / normal.0;
            let (xmin, xmax) = if a < b { (a, b) } else { (b, a) };
            let lo = ((xmin + 0.5) / w - 0.5).floor() as isize - 1;
            let hi = ((xmax + 0.5) / w - 0.5).ceil() as isize + 1;
            if hi < 0 || lo >= i as isize {
                continue;
            }
            (lo.max(0) as usize, (hi.min(i as isize - 1)) as usize)
        } else {
            // near-horizontal ray: the offset condition involves y only
            if (yc * normal.1 - s).abs() > support + 1e-12 {
                continue;
            }
            (0, i - 1)
        };
        for ix in ix_lo..=ix_hi {
            let x0 = -0.5 + ix as f64 * w;
            let y0 = -0.5 + iy as f64 * w;
            let len = clip_length(p0, dir, (x0, x0 + w), (y0, y0 + w));
            if len > 0.0 {
                entries.push(((iy * i + ix) as u32, len));
            }
        }
    }
    entries
}

/// Assemble the operator for `geometry`. Rays that miss the unit square keep
/// their (empty) rows so the `K x L` layout is preserved.
pub fn build_operator(geometry: &Geometry) -> Result<RadonMatrix> {
    geometry.validate()?;
    let rows: Vec<Vec<(u32, f64)>> = (0..geometry.num_rays())
        .into_par_iter()
        .map(|ray| ray_entries(geometry, ray / geometry.num_positions, ray % geometry.num_positions))
        .collect();

    let nnz = rows.iter().map(Vec::len).sum();
    let mut row_offsets = Vec::with_capacity(rows.len() + 1);
    let mut row_cols = Vec::with_capacity(nnz);
    let mut row_vals = Vec::with_capacity(nnz);
    row_offsets.push(0);
    for row in &rows {
        for &(c, v) in row {
            row_cols.push(c);
            row_vals.push(v);
        }
        row_offsets.push(row_cols.len());
    }

    // column-compressed copy for the adjoint
    let n_cols = geometry.num_pixels();
    let mut counts = vec![0usize; n_cols + 1];
    for &c in &row_cols {
        counts[c as usize + 1] += 1;
    }
    for j in 0..n_cols {
        counts[j + 1] += counts[j];
    }
    let col_offsets = counts.clone();
    let mut cursor = counts;
    let mut col_rows = vec![0u32; nnz];
    let mut col_vals = vec![0.0f64; nnz];
    for (ray, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            let slot = cursor[c as usize];
            col_rows[slot] = ray as u32;
            col_vals[slot] = v;
            cursor[c as usize] += 1;
        }
    }

    Ok(RadonMatrix {
        geometry: *geometry,
        row_offsets,
        row_cols,
        row_vals,
        col_offsets,
        col_rows,
        col_vals,
    })
}

impl RadonMatrix {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn nnz(&self) -> usize {
        self.row_vals.len()
    }

    pub fn row(&self, ray: usize) -> (&[u32], &[f64]) {
        let span = self.row_offsets[ray]..self.row_offsets[ray + 1];
        (&self.row_cols[span.clone()], &self.row_vals[span])
    }

    /// `A u`: one line integral per ray.
    pub fn forward(&self, image: &Image) -> Result<Sinogram> {
        if image.len() != self.geometry.num_pixels() {
            return Err(Error::Dimension {
                context: "RadonMatrix::forward",
                expected: self.geometry.num_pixels(),
                got: image.len(),
            });
        }
        let u = image.as_slice();
        let mut out = Sinogram::zeros(&self.geometry);
        for (ray, slot) in out.as_mut_slice().iter_mut().enumerate() {
            let span = self.row_offsets[ray]..self.row_offsets[ray + 1];
            let mut acc = 0.0;
            for (c, v) in self.row_cols[span.clone()].iter().zip(&self.row_vals[span]) {
                acc += v * u[*c as usize];
            }
            *slot = acc;
        }
        Ok(out)
    }

    /// `A^T f`: the unscaled back-projection, exact adjoint of [`forward`](Self::forward).
    pub fn adjoint(&self, sinogram: &Sinogram) -> Result<Image> {
        if sinogram.len() != self.geometry.num_rays()
            || !sinogram.matches(&self.geometry)
        {
            return Err(Error::Dimension {
                context: "RadonMatrix::adjoint",
                expected: self.geometry.num_rays(),
                got: sinogram.len(),
            });
        }
        let f = sinogram.as_slice();
        let mut out = Image::zeros(self.geometry.image_size);
        for (pixel, slot) in out.as_mut_slice().iter_mut().enumerate() {
            let span = self.col_offsets[pixel]..self.col_offsets[pixel + 1];
            let mut acc = 0.0;
            for (r, v) in self.col_rows[span.clone()].iter().zip(&self.col_vals[span]) {
                acc += v * f[*r as usize];
            }
            *slot = acc;
        }
        Ok(out)
    }

    /// Adjoint over a raw slice, for hot paths that avoid `Sinogram` wrapping.
    pub(crate) fn adjoint_slice(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.geometry.num_rays());
        debug_assert_eq!(out.len(), self.geometry.num_pixels());
        for (pixel, slot) in out.iter_mut().enumerate() {
            let span = self.col_offsets[pixel]..self.col_offsets[pixel + 1];
            let mut acc = 0.0;
            for (r, v) in self.col_rows[span.clone()].iter().zip(&self.col_vals[span]) {
                acc += v * f[*r as usize];
            }
            *slot = acc;
        }
    }

    /// Forward over raw slices.
    pub(crate) fn forward_slice(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.geometry.num_pixels());
        debug_assert_eq!(out.len(), self.geometry.num_rays());
        for (ray, slot) in out.iter_mut().enumerate() {
            let span = self.row_offsets[ray]..self.row_offsets[ray + 1];
            let mut acc = 0.0;
            for (c, v) in self.row_cols[span.clone()].iter().zip(&self.row_vals[span]) {
                acc += v * u[*c as usize];
            }
            *slot = acc;
        }
    }

    /// Dense column-major copy, `(K*L) x I^2`.
    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut dense = faer::Mat::zeros(self.geometry.num_rays(), self.geometry.num_pixels());
        for ray in 0..self.geometry.num_rays() {
            let span = self.row_offsets[ray]..self.row_offsets[ray + 1];
            for (c, v) in self.row_cols[span.clone()].iter().zip(&self.row_vals[span]) {
                dense[(ray, *c as usize)] = *v;
            }
        }
        dense
    }

    /// Write a JSON geometry header followed by `row col value` triplet lines,
    /// for diffing operators across implementations.
    pub fn dump_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        let header = json!({
            "image_size": self.geometry.image_size,
            "num_angles": self.geometry.num_angles,
            "num_positions": self.geometry.num_positions,
            "nnz": self.nnz(),
        });
        writeln!(out, "{header}")?;
        for ray in 0..self.geometry.num_rays() {
            let span = self.row_offsets[ray]..self.row_offsets[ray + 1];
            for (c, v) in self.row_cols[span.clone()].iter().zip(&self.row_vals[span]) {
                writeln!(out, "{ray} {c} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

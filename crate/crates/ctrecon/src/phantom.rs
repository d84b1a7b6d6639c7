//! Random-ellipse phantom generation.
//!
//! Each phantom is a handful of ellipses whose centers sit on one circle
//! around the image midpoint. Overlapping intensities add and the result is
//! clamped to `[0, 1]`. Sampling order per image (all uniform):
//!
//! 1. ellipse count in `count_range`
//! 2. ring radius in `ring_radius_range`
//! 3. per ellipse: ring angle in `[0, 2 pi)`, semi-axes in `semi_axis_range`,
//!    rotation in `[0, pi)`, intensity in `intensity_range`; the draw is
//!    rejected and repeated in full whenever the rotated ellipse pokes out of
//!    the unit square.
//!
//! A pixel counts as inside an ellipse iff its center satisfies the ellipse
//! inequality; there is no antialiasing, so rasterization is reproducible.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, domain};

/// One ellipse in unit-square coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Rotation of the first semi-axis, radians in `[0, pi)`.
    pub rotation: f64,
    pub intensity: f64,
}

impl EllipseSpec {
    /// Half-extents of the axis-aligned bounding box of the rotated ellipse.
    pub fn bounding_half_extents(&self) -> (f64, f64) {
        let (a, b) = self.semi_axes;
        let (sin, cos) = self.rotation.sin_cos();
        let ex = ((a * cos).powi(2) + (b * sin).powi(2)).sqrt();
        let ey = ((a * sin).powi(2) + (b * cos).powi(2)).sqrt();
        (ex, ey)
    }

    /// True iff the four extremal points of the rotated ellipse lie in `[0,1]^2`.
    pub fn contained_in_unit_square(&self) -> bool {
        let (ex, ey) = self.bounding_half_extents();
        let (cx, cy) = self.center;
        cx - ex >= 0.0 && cx + ex <= 1.0 && cy - ey >= 0.0 && cy + ey <= 1.0
    }

    /// Ellipse membership test for a point in unit-square coordinates.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (sin, cos) = self.rotation.sin_cos();
        let p = (dx * cos + dy * sin) / self.semi_axes.0;
        let q = (-dx * sin + dy * cos) / self.semi_axes.1;
        p * p + q * q <= 1.0
    }
}

/// Sampling ranges for the phantom distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Inclusive range for the number of ellipses per image.
    pub count_range: (u64, u64),
    /// Radius of the circle the ellipse centers are placed on.
    pub ring_radius_range: (f64, f64),
    /// Range for both semi-axes.
    pub semi_axis_range: (f64, f64),
    /// Range for the additive intensity of each ellipse.
    pub intensity_range: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            count_range: (3, 8),
            ring_radius_range: (0.15, 0.35),
            semi_axis_range: (0.05, 0.20),
            intensity_range: (0.2, 1.0),
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.count_range.0 > self.count_range.1 {
            return Err(Error::config("empty ellipse count range"));
        }
        let ranges = [
            ("ring_radius_range", self.ring_radius_range),
            ("semi_axis_range", self.semi_axis_range),
            ("intensity_range", self.intensity_range),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(format!("empty or non-finite {name}")));
            }
        }
        if self.semi_axis_range.0 <= 0.0 {
            return Err(Error::config("semi-axes must be positive"));
        }
        if self.intensity_range.0 <= 0.0 || self.intensity_range.1 > 1.0 {
            return Err(Error::config("intensity range must lie in (0, 1]"));
        }
        if self.ring_radius_range.0 < 0.0 || self.ring_radius_range.1 >= 0.5 {
            return Err(Error::config("ring radius range must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

const MAX_REJECTIONS: usize = 10_000;

/// Draw the ellipse list for one phantom from its dedicated random stream.
pub fn sample_ellipses(rng: &mut ChaCha8Rng, params: &GeneratorParams) -> Result<Vec<EllipseSpec>> {
    let count = rng::uniform_int(rng, params.count_range.0, params.count_range.1) as usize;
    let ring_radius = rng::uniform_in(rng, params.ring_radius_range.0, params.ring_radius_range.1);
    let mut ellipses = Vec::with_capacity(count);
    for _ in 0..count {
        let mut attempts = 0;
        let spec = loop {
            let ring_angle = rng::uniform_in(rng, 0.0, 2.0 * std::f64::consts::PI);
            let a = rng::uniform_in(rng, params.semi_axis_range.0, params.semi_axis_range.1);
            let b = rng::uniform_in(rng, params.semi_axis_range.0, params.semi_axis_range.1);
            let rotation = rng::uniform_in(rng, 0.0, std::f64::consts::PI);
            let intensity = rng::uniform_in(rng, params.intensity_range.0, params.intensity_range.1);
            let spec = EllipseSpec {
                center: (
                    0.5 + ring_radius * ring_angle.cos(),
                    0.5 + ring_radius * ring_angle.sin(),
                ),
                semi_axes: (a, b),
                rotation,
                intensity,
            };
            if spec.contained_in_unit_square() {
                break spec;
            }
            attempts += 1;
            if attempts >= MAX_REJECTIONS {
                return Err(Error::config(
                    "ellipse containment unsatisfiable for the given ranges",
                ));
            }
        };
        ellipses.push(spec);
    }
    Ok(ellipses)
}

/// Rasterize ellipses onto an `image_size`-pixel grid; overlaps add, then clamp.
pub fn rasterize(ellipses: &[EllipseSpec], image_size: usize) -> Image {
    let mut image = Image::zeros(image_size);
    let w = 1.0 / image_size as f64;
    for iy in 0..image_size {
        let y = (iy as f64 + 0.5) * w;
        for ix in 0..image_size {
            let x = (ix as f64 + 0.5) * w;
            let mut v = 0.0;
            for e in ellipses {
                if e.contains(x, y) {
                    v += e.intensity;
                }
            }
            if v > 0.0 {
                image.set(ix, iy, v.min(1.0));
            }
        }
    }
    image
}

/// Generate phantom number `index` of the dataset stream `seed`.
///
/// Ellipse parameters depend on `(seed, index, params)` only, so the same
/// continuous phantom can be rasterized at any resolution.
pub fn generate_phantom(
    seed: u64,
    index: u64,
    params: &GeneratorParams,
    image_size: usize,
) -> Result<Image> {
    if image_size < 4 {
        return Err(Error::config("image_size must be at least 4"));
    }
    params.validate()?;
    let mut rng = rng::stream_rng(seed, domain::PHANTOM, 0, index);
    let ellipses = sample_ellipses(&mut rng, params)?;
    Ok(rasterize(&ellipses, image_size))
}

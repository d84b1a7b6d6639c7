//! Scan geometry and discrete-to-continuous scaling.
//!
//! Images live on the unit square (pixel width `1/I`), centered at the origin
//! for projection purposes. A ray with angle index `k` travels in direction
//! `(cos theta_k, sin theta_k)` with `theta_k = k*pi/K`, offset by `s_l` along
//! the normal `(-sin theta_k, cos theta_k)`, where the `L` offsets are
//! equispaced midpoints of `[-sqrt(2)/2, sqrt(2)/2]`. At `theta = 0` the rays
//! are horizontal and sweep the image rows bottom to top.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    /// Pixels per image side (`I`).
    pub image_size: usize,
    /// Equispaced projection angles in `[0, pi)` (`K`).
    pub num_angles: usize,
    /// Equispaced ray offsets in `[-sqrt(2)/2, sqrt(2)/2]` (`L`).
    pub num_positions: usize,
}

impl Geometry {
    pub fn new(image_size: usize, num_angles: usize, num_positions: usize) -> Result<Self> {
        let g = Geometry {
            image_size,
            num_angles,
            num_positions,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.num_angles == 0 || self.num_positions == 0 {
            return Err(Error::config(format!(
                "geometry dimensions must be positive, got I={} K={} L={}",
                self.image_size, self.num_angles, self.num_positions
            )));
        }
        Ok(())
    }

    pub fn num_pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn num_rays(&self) -> usize {
        self.num_angles * self.num_positions
    }

    pub fn pixel_width(&self) -> f64 {
        1.0 / self.image_size as f64
    }

    /// Ray direction angle `theta_k = k*pi/K`, half-open grid on `[0, pi)`.
    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * std::f64::consts::PI / self.num_angles as f64
    }

    /// Ray offset `s_l`, the midpoint grid on `[-sqrt(2)/2, sqrt(2)/2]`.
    pub fn position(&self, l: usize) -> f64 {
        -SQRT2 / 2.0 + (l as f64 + 0.5) * SQRT2 / self.num_positions as f64
    }

    /// Offset grid spacing `h = sqrt(2)/L`.
    pub fn position_spacing(&self) -> f64 {
        SQRT2 / self.num_positions as f64
    }

    /// Physical frequency (cycles per unit length) of DFT bin `j`.
    ///
    /// Signed convention: bins above `L/2` alias to negative frequencies.
    /// With `h = sqrt(2)/L` the grid is `r_j = j_signed / sqrt(2)` for any `L`,
    /// so frequency axes are directly comparable across resolutions.
    pub fn frequency(&self, j: usize) -> f64 {
        let l = self.num_positions;
        let signed = if j <= l / 2 {
            j as isize
        } else {
            j as isize - l as isize
        };
        signed as f64 / (l as f64 * self.position_spacing())
    }

    /// Largest magnitude on the frequency grid.
    pub fn max_frequency(&self) -> f64 {
        (self.num_positions / 2) as f64 / (self.num_positions as f64 * self.position_spacing())
    }

    /// Flat ray index for (angle k, position l); sinograms are angle-major.
    pub fn ray_index(&self, k: usize, l: usize) -> usize {
        k * self.num_positions + l
    }

    pub fn scaling(&self) -> ScalingFactors {
        ScalingFactors::for_geometry(self)
    }
}

/// Factors relating the discrete operator, its singular system and the
/// data statistics to their continuous counterparts.
///
/// `sigma_hat` of the discrete pair `(sigma_n, g_n)` is the resolution-invariant
/// singular value; `transfer` methods below use it to move coefficients
/// between geometries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    /// `A^* v ~= adjoint_factor * A^T v`, the quadrature weight `pi/K * sqrt(2)/L`.
    pub adjoint_factor: f64,
    /// Singular value factor `sqrt(adjoint_factor)`.
    pub sigma_factor: f64,
    /// Image singular vector factor `I`.
    pub u_factor: f64,
    /// Data singular vector factor `sqrt(K*L / (sqrt(2)*pi))`.
    pub v_factor: f64,
    /// Signal second-moment factor `1/I^2`.
    pub pi_factor: f64,
    /// Noise second-moment factor, equal to `adjoint_factor`.
    pub delta_factor: f64,
    /// Cross-moment factor `sigma_factor / I`.
    pub gamma_factor: f64,
}

impl ScalingFactors {
    pub fn for_geometry(geometry: &Geometry) -> Self {
        let kl = (geometry.num_angles * geometry.num_positions) as f64;
        let adjoint_factor = SQRT2 * std::f64::consts::PI / kl;
        let sigma_factor = adjoint_factor.sqrt();
        let i = geometry.image_size as f64;
        ScalingFactors {
            adjoint_factor,
            sigma_factor,
            u_factor: i,
            v_factor: (kl / (SQRT2 * std::f64::consts::PI)).sqrt(),
            pi_factor: 1.0 / (i * i),
            delta_factor: adjoint_factor,
            gamma_factor: sigma_factor / i,
        }
    }

    /// Resolution-invariant rescaling of a discrete singular value.
    ///
    /// `sigma_factor` alone leaves a residual factor `I` between resolutions
    /// (it accounts for the data-side quadrature but not for the image-side
    /// `u_factor`); the invariant quantity is `I * sigma_factor * sigma_n`.
    pub fn sigma_hat(&self, sigma: f64) -> f64 {
        self.u_factor * self.sigma_factor * sigma
    }

    /// Resolution-invariant rescaling of a discrete spectral coefficient,
    /// the inverse companion of [`sigma_hat`](Self::sigma_hat): `g_hat * sigma_hat`
    /// equals the dimensionless damping factor `g_n * sigma_n`.
    pub fn g_hat(&self, g: f64) -> f64 {
        g / (self.u_factor * self.sigma_factor)
    }

    /// Invert [`g_hat`](Self::g_hat) at this geometry.
    pub fn g_from_hat(&self, g_hat: f64) -> f64 {
        g_hat * self.u_factor * self.sigma_factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_factors_single_ray() {
        let g = Geometry::new(1, 1, 1).unwrap();
        let s = g.scaling();
        assert!((s.adjoint_factor - SQRT2 * std::f64::consts::PI).abs() < 1e-12);
        assert!((s.adjoint_factor - 4.442882938158366).abs() < 1e-12);
    }

    #[test]
    fn scaling_factor_identities() {
        let g = Geometry::new(32, 64, 47).unwrap();
        let s = g.scaling();
        assert!((s.sigma_factor * s.sigma_factor - s.adjoint_factor).abs() < 1e-15);
        assert!((s.pi_factor * (g.image_size * g.image_size) as f64 - 1.0).abs() < 1e-12);
        assert_eq!(s.delta_factor, s.adjoint_factor);
        assert!((s.gamma_factor - s.sigma_factor / s.u_factor).abs() < 1e-18);
    }

    #[test]
    fn angle_and_position_grids() {
        let g = Geometry::new(4, 4, 4).unwrap();
        assert_eq!(g.angle(0), 0.0);
        assert!((g.angle(2) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        // midpoints are symmetric around zero
        assert!((g.position(0) + g.position(3)).abs() < 1e-15);
        assert!((g.position(1) + SQRT2 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn frequency_grid_is_signed_and_resolution_aligned() {
        let g = Geometry::new(8, 8, 6).unwrap();
        assert_eq!(g.frequency(0), 0.0);
        assert!((g.frequency(1) - 1.0 / SQRT2).abs() < 1e-15);
        assert!((g.frequency(5) + 1.0 / SQRT2).abs() < 1e-15);
        let g2 = Geometry::new(16, 16, 12).unwrap();
        assert!((g2.frequency(1) - g.frequency(1)).abs() < 1e-15);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Geometry::new(0, 4, 4).is_err());
    }
}

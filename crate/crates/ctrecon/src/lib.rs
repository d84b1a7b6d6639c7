//! Data-driven linear regularization for CT reconstruction.
//!
//! The crate builds a discrete Radon operator for square pixel images,
//! computes its thin SVD, and reconstructs images from noisy sinograms with
//! two families of linear methods: per-mode spectral coefficients in the
//! singular basis, and per-frequency filters applied before back-projection.
//! Both families have closed-form empirically optimal parameters and a
//! mini-batch gradient trainer that must recover them; the `experiment`
//! module orchestrates the comparisons.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fourier;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod radon;
pub mod rng;
pub mod sinogram;
pub mod spectral;
pub mod svd;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{Geometry, ScalingFactors};
pub use image::Image;
pub use sinogram::Sinogram;

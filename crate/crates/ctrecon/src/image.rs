//! Square pixel images, the reconstruction-space vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `I x I` image stored row-major: pixel `(ix, iy)` sits at `iy * I + ix`,
/// with `iy = 0` the bottom row in unit-square coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    size: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != size * size {
            return Err(Error::Dimension {
                context: "Image::new",
                expected: size * size,
                got: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::format("pixels", format!("non-finite value {bad}")));
        }
        Ok(Image { size, pixels })
    }

    pub fn zeros(size: usize) -> Self {
        Image {
            size,
            pixels: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pixels
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.pixels[iy * self.size + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: f64) {
        self.pixels[iy * self.size + ix] = value;
    }

    /// Unit-square coordinates of the center of pixel `(ix, iy)`.
    pub fn pixel_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let w = 1.0 / self.size as f64;
        ((ix as f64 + 0.5) * w, (iy as f64 + 0.5) * w)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(Image::new(3, vec![0.0; 8]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Image::new(2, vec![0.0, 1.0, f64::NAN, 0.5]).is_err());
    }

    #[test]
    fn indexing_is_row_major_bottom_up() {
        let mut im = Image::zeros(3);
        im.set(2, 0, 5.0);
        assert_eq!(im.as_slice()[2], 5.0);
        assert_eq!(im.get(2, 0), 5.0);
        let (x, y) = im.pixel_center(0, 2);
        assert!((x - 1.0 / 6.0).abs() < 1e-15);
        assert!((y - 5.0 / 6.0).abs() < 1e-15);
    }
}

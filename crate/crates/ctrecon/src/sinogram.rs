//! Sinograms, the data-space vectors: one row of ray integrals per angle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Geometry;

/// A `K x L` sinogram stored angle-major: value `(k, l)` sits at `k * L + l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    num_angles: usize,
    num_positions: usize,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn new(num_angles: usize, num_positions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_angles * num_positions {
            return Err(Error::Dimension {
                context: "Sinogram::new",
                expected: num_angles * num_positions,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::format("sinogram", format!("non-finite value {bad}")));
        }
        Ok(Sinogram {
            num_angles,
            num_positions,
            values,
        })
    }

    pub fn zeros(geometry: &Geometry) -> Self {
        Sinogram {
            num_angles: geometry.num_angles,
            num_positions: geometry.num_positions,
            values: vec![0.0; geometry.num_rays()],
        }
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_positions(&self) -> usize {
        self.num_positions
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matches(&self, geometry: &Geometry) -> bool {
        self.num_angles == geometry.num_angles && self.num_positions == geometry.num_positions
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.num_positions + l]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.num_positions..(k + 1) * self.num_positions]
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_angle_major() {
        let s = Sinogram::new(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.get(1, 0), 3.0);
        assert_eq!(s.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(Sinogram::new(2, 3, vec![0.0; 5]).is_err());
    }
}

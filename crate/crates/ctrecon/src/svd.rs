//! Thin SVD of the Radon matrix.
//!
//! Convention follows the operator factorization `A = V diag(sigma) U^T`:
//! `U` holds the image-space singular vectors (columns `u_n`, `I^2 x R`) and
//! `V` the data-space ones (columns `v_n`, `K*L x R`), with `sigma`
//! non-increasing and strictly positive after truncation.

use faer::Mat;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::radon::RadonMatrix;
use crate::sinogram::Sinogram;

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    /// Singular values below `truncation_tol * sigma_1` are dropped.
    pub truncation_tol: f64,
    /// Refuse to densify operators larger than this many elements.
    pub max_dense_elements: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            truncation_tol: 1e-12,
            max_dense_elements: 1 << 28,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSvd {
    /// Image-space singular vectors, `I^2 x R`, orthonormal columns.
    u: Mat<f64>,
    /// Non-increasing positive singular values.
    sigma: Vec<f64>,
    /// Data-space singular vectors, `K*L x R`, orthonormal columns.
    v: Mat<f64>,
}

/// Dense thin SVD of the operator, truncated and sign-canonicalized
/// (the largest-magnitude entry of each `u_n` is made positive, so decompositions
/// are comparable across runs and implementations).
pub fn compute_svd(op: &RadonMatrix, options: SvdOptions) -> Result<OperatorSvd> {
    let rows = op.geometry().num_rays();
    let cols = op.geometry().num_pixels();
    let needed = rows * cols;
    if needed > options.max_dense_elements {
        return Err(Error::Capacity {
            needed,
            budget: options.max_dense_elements,
        });
    }
    let dense = op.to_dense();
    let svd = dense
        .thin_svd()
        .map_err(|e| Error::config(format!("svd did not converge: {e:?}")))?;

    // faer factors A = W S X^T with W data-side and X image-side
    let w = svd.U();
    let x = svd.V();
    let s = svd.S();

    let full_rank = s.dim().min(rows.min(cols));
    let sigma_1 = if full_rank > 0 { s[0] } else { 0.0 };
    let mut rank = 0;
    while rank < full_rank && s[rank] > options.truncation_tol * sigma_1 && s[rank] > 0.0 {
        rank += 1;
    }

    let mut u = Mat::zeros(cols, rank);
    let mut v = Mat::zeros(rows, rank);
    let mut sigma = Vec::with_capacity(rank);
    for n in 0..rank {
        sigma.push(s[n]);
        let mut flip = 1.0;
        let mut best = 0.0f64;
        for r in 0..cols {
            let val = x[(r, n)];
            if val.abs() > best {
                best = val.abs();
                flip = if val < 0.0 { -1.0 } else { 1.0 };
            }
        }
        for r in 0..cols {
            u[(r, n)] = flip * x[(r, n)];
        }
        for r in 0..rows {
            v[(r, n)] = flip * w[(r, n)];
        }
    }

    Ok(OperatorSvd { u, sigma, v })
}

impl OperatorSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn u(&self) -> &Mat<f64> {
        &self.u
    }

    pub fn v(&self) -> &Mat<f64> {
        &self.v
    }

    /// Coefficients of an image in the singular basis, `U^T u`.
    pub fn image_coefficients(&self, image: &Image) -> Vec<f64> {
        project_columns(&self.u, image.as_slice())
    }

    /// Coefficients of a sinogram in the data singular basis, `V^T f`.
    pub fn data_coefficients(&self, sinogram: &Sinogram) -> Vec<f64> {
        project_columns(&self.v, sinogram.as_slice())
    }

    /// `U c` for a coefficient vector c.
    pub fn synthesize_image(&self, coeffs: &[f64], image_size: usize) -> Result<Image> {
        if coeffs.len() != self.rank() {
            return Err(Error::Dimension {
                context: "OperatorSvd::synthesize_image",
                expected: self.rank(),
                got: coeffs.len(),
            });
        }
        let mut pixels = vec![0.0; self.u.nrows()];
        for (n, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (p, &un) in pixels.iter_mut().zip(self.u.col_as_slice(n)) {
                *p += c * un;
            }
        }
        Image::new(image_size, pixels)
    }

    /// Frobenius distance between `A` and `V diag(sigma) U^T`.
    pub fn reconstruction_error(&self, op: &RadonMatrix) -> f64 {
        let dense = op.to_dense();
        let mut vs = self.v.clone();
        for n in 0..self.rank() {
            let s = self.sigma[n];
            for val in vs.col_as_slice_mut(n) {
                *val *= s;
            }
        }
        let recon = &vs * self.u.transpose();
        let mut acc = 0.0;
        for j in 0..dense.ncols() {
            for i in 0..dense.nrows() {
                let d = dense[(i, j)] - recon[(i, j)];
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// Worst absolute deviation of `U^T U` and `V^T V` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in [&self.u, &self.v] {
            let gram = m.transpose() * m;
            for j in 0..gram.ncols() {
                for i in 0..gram.nrows() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((gram[(i, j)] - target).abs());
                }
            }
        }
        worst
    }
}

fn project_columns(basis: &Mat<f64>, vector: &[f64]) -> Vec<f64> {
    debug_assert_eq!(basis.nrows(), vector.len());
    (0..basis.ncols())
        .map(|n| {
            basis
                .col_as_slice(n)
                .iter()
                .zip(vector)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

//! Dataset generation, splits and on-disk format.
//!
//! On disk a dataset is a directory holding `manifest.json` plus one raw
//! little-endian `f64` pixel blob per split (`train.f64`, `val.f64`,
//! `test.f64`), each a concatenation of row-major images.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::phantom::{self, GeneratorParams};

pub const MANIFEST_FILE: &str = "manifest.json";
const SPLIT_FILES: [&str; 3] = ["train.f64", "val.f64", "test.f64"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub count: usize,
    /// (train, validation, test) fractions; must sum to 1.
    pub split: (f64, f64, f64),
    pub image_size: usize,
    pub generator: GeneratorParams,
}

impl DatasetManifest {
    /// Desk-scale default: 2000 images at 32x32, split 64/16/20.
    pub fn desk_default(seed: u64) -> Self {
        DatasetManifest {
            seed,
            count: 2000,
            split: (0.64, 0.16, 0.20),
            image_size: 32,
            generator: GeneratorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("dataset count must be at least 1"));
        }
        let (a, b, c) = self.split;
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions must sum to 1, got {a} + {b} + {c}"
            )));
        }
        if a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(Error::config("split fractions must be non-negative"));
        }
        if self.image_size < 4 {
            return Err(Error::config("image_size must be at least 4"));
        }
        self.generator.validate()
    }

    /// Split sizes: validation and test round half-away-from-zero, the
    /// remainder goes to train.
    pub fn split_sizes(&self) -> Result<(usize, usize, usize)> {
        let n = self.count as f64;
        let val = (self.split.1 * n).round() as usize;
        let test = (self.split.2 * n).round() as usize;
        if val + test > self.count {
            return Err(Error::config(
                "split rounding leaves no room for the training set",
            ));
        }
        Ok((self.count - val - test, val, test))
    }
}

/// In-memory dataset: images in generation order, split into three
/// contiguous blocks (train, then validation, then test). Read-only after
/// creation.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: DatasetManifest,
    images: Vec<Image>,
    n_train: usize,
    n_val: usize,
}

/// Which contiguous block of the dataset a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Dataset {
    /// Generate all phantoms of `manifest` (parallel over the image index;
    /// each image has its own random stream, so the result is order-independent).
    pub fn generate(manifest: &DatasetManifest) -> Result<Dataset> {
        manifest.validate()?;
        let (n_train, n_val, _) = manifest.split_sizes()?;
        let images = (0..manifest.count)
            .into_par_iter()
            .map(|i| {
                phantom::generate_phantom(
                    manifest.seed,
                    i as u64,
                    &manifest.generator,
                    manifest.image_size,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            manifest: manifest.clone(),
            images,
            n_train,
            n_val,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        (
            self.n_train,
            self.n_val,
            self.images.len() - self.n_train - self.n_val,
        )
    }

    pub fn images(&self, split: Split) -> &[Image] {
        let (a, b) = self.split_bounds(split);
        &self.images[a..b]
    }

    /// Global sample indices of a split; these index the per-sample random
    /// streams (noise realizations), so they are stable across splits.
    pub fn global_indices(&self, split: Split) -> std::ops::Range<usize> {
        let (a, b) = self.split_bounds(split);
        a..b
    }

    fn split_bounds(&self, split: Split) -> (usize, usize) {
        match split {
            Split::Train => (0, self.n_train),
            Split::Val => (self.n_train, self.n_train + self.n_val),
            Split::Test => (self.n_train + self.n_val, self.images.len()),
        }
    }

    /// Write `manifest.json` and the three pixel blobs into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest_json = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(dir.join(MANIFEST_FILE), manifest_json)?;
        for (split, file) in [Split::Train, Split::Val, Split::Test].iter().zip(SPLIT_FILES) {
            let mut out = Vec::new();
            for image in self.images(*split) {
                for v in image.as_slice() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            fs::write(dir.join(file), out)?;
        }
        Ok(())
    }

    /// Load a dataset saved by [`Dataset::save`]; round-trips bit-exactly.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest = load_manifest(dir)?;
        let (n_train, n_val, n_test) = manifest.split_sizes()?;
        let pixels_per_image = manifest.image_size * manifest.image_size;
        let mut images = Vec::with_capacity(manifest.count);
        for (file, expected_images) in SPLIT_FILES.iter().zip([n_train, n_val, n_test]) {
            let mut bytes = Vec::new();
            fs::File::open(dir.join(file))?.read_to_end(&mut bytes)?;
            let expected_bytes = expected_images * pixels_per_image * 8;
            if bytes.len() != expected_bytes {
                return Err(Error::format(
                    *file,
                    format!(
                        "expected {expected_bytes} bytes for {expected_images} images of size {}, got {}",
                        manifest.image_size,
                        bytes.len()
                    ),
                ));
            }
            for chunk in bytes.chunks_exact(pixels_per_image * 8) {
                let pixels: Vec<f64> = chunk
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                images.push(Image::new(manifest.image_size, pixels)?);
            }
        }
        Ok(Dataset {
            manifest,
            images,
            n_train,
            n_val,
        })
    }
}

/// Read only the manifest, without touching the pixel blobs.
pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest.validate()?;
    Ok(manifest)
}

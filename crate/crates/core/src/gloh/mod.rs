//! Dense GLOH representation of a face image.
//!
//! The image is covered by overlapping square patches on a regular grid. Each
//! patch gets a log-polar histogram of gradient orientations (a central disc
//! plus two rings of angular sectors), and the per-patch histograms are
//! concatenated without any dimensionality reduction.

mod descriptor;
pub mod gfv;
mod gradient;

pub use descriptor::{normalize_descriptor, patch_descriptor, PatchLayout};
pub use gradient::{compute_gradients, GradientField};

use thiserror::Error;

use crate::imageio::GrayImage;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum GlohError {
    #[error("image {height}x{width} is smaller than the {patch_size}x{patch_size} patch")]
    ImageTooSmall {
        height: usize,
        width: usize,
        patch_size: usize,
    },
    #[error("patch at ({row}, {col}) does not fit in a {height}x{width} field")]
    PatchOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("histogram entry {0} is negative")]
    NegativeEntry(usize),
    #[error("invalid descriptor parameters: {0}")]
    InvalidParams(String),
}

/// Descriptor configuration. Defaults give 136 bins per 10x10 patch.
#[derive(Debug, Clone, PartialEq)]
pub struct GlohParams {
    pub patch_size: usize,
    pub stride: usize,
    /// Disc radius, inner ring and outer ring outer radii, in pixels.
    pub radii: [f64; 3],
    pub n_sectors: usize,
    pub n_orient: usize,
    pub clip_threshold: Option<f64>,
}

impl Default for GlohParams {
    fn default() -> Self {
        Self {
            patch_size: 10,
            stride: 3,
            radii: [2.0, 3.0, 5.0],
            n_sectors: 8,
            n_orient: 8,
            clip_threshold: Some(0.2),
        }
    }
}

impl GlohParams {
    pub fn validate(&self) -> Result<(), GlohError> {
        let bad = |m: String| Err(GlohError::InvalidParams(m));
        if self.patch_size == 0 || self.stride == 0 {
            return bad("patch_size and stride must be positive".into());
        }
        if self.n_sectors == 0 || self.n_orient == 0 {
            return bad("n_sectors and n_orient must be positive".into());
        }
        let [r0, r1, r2] = self.radii;
        if !(r0 > 0.0 && r0 < r1 && r1 < r2) || !r2.is_finite() {
            return bad(format!(
                "radii {:?} must be positive and strictly ascending",
                self.radii
            ));
        }
        if r2 > self.patch_size as f64 / 2.0 + 1.0 {
            return bad(format!(
                "outer radius {r2} exceeds patch_size/2 + 1 = {}",
                self.patch_size as f64 / 2.0 + 1.0
            ));
        }
        if let Some(c) = self.clip_threshold {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("clip threshold {c} not in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Central disc plus two rings of sectors.
    pub fn n_spatial_bins(&self) -> usize {
        1 + 2 * self.n_sectors
    }

    pub fn per_patch_dim(&self) -> usize {
        self.n_spatial_bins() * self.n_orient
    }

    /// Total feature length for an image of the given size.
    pub fn feature_dim(&self, height: usize, width: usize) -> Result<usize, GlohError> {
        Ok(patch_grid(height, width, self)?.len() * self.per_patch_dim())
    }
}

/// Top-left corners of all patches, row-major.
pub fn patch_grid(
    height: usize,
    width: usize,
    params: &GlohParams,
) -> Result<Vec<(usize, usize)>, GlohError> {
    params.validate()?;
    let p = params.patch_size;
    if height < p || width < p {
        return Err(GlohError::ImageTooSmall {
            height,
            width,
            patch_size: p,
        });
    }
    let rows = (0..=height - p).step_by(params.stride);
    Ok(rows
        .flat_map(|r| (0..=width - p).step_by(params.stride).map(move |c| (r, c)))
        .collect())
}

/// Concatenated per-patch descriptors of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    values: Vec<T>,
    block_len: usize,
}

impl<T: Real> FeatureVector<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.values.len() / self.block_len
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, T> {
        self.values.chunks_exact(self.block_len)
    }
}

pub fn extract_gloh<T: Real>(
    img: &GrayImage,
    params: &GlohParams,
) -> Result<FeatureVector<T>, GlohError> {
    let origins = patch_grid(img.height(), img.width(), params)?;
    let grad = compute_gradients::<T>(img);
    let layout = PatchLayout::new(params);
    let block_len = params.per_patch_dim();
    let clip = params.clip_threshold.map(T::lit);
    let mut values = vec![T::zero(); origins.len() * block_len];
    for (block, &origin) in values.chunks_exact_mut(block_len).zip(&origins) {
        layout.accumulate(&grad, origin, block);
        descriptor::normalize_in_place(block, clip);
    }
    Ok(FeatureVector { values, block_len })
}

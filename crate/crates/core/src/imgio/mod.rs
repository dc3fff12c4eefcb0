//! Image containers and their on-disk forms.
//!
//! Images are stored row-major with a top-left origin. Grayscale images carry
//! their palette size `L` explicitly so that every pixel is a valid index into
//! an appearance model.

mod anymap;
mod serial;

pub use anymap::{load_anymap, load_label_map, save_discrete, save_label_map, save_rgb, Anymap};
pub use serial::{
    deserialize_model_set, deserialize_segmentation, read_gamma_slices, read_model_set,
    read_segmentation, write_gamma_slices,
    serialize_model_set, serialize_segmentation, write_json, write_model_set, write_segmentation,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A palette-indexed image with values in `0..palette_size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteImage {
    width: usize,
    height: usize,
    palette_size: usize,
    pixels: Vec<u32>,
}

impl DiscreteImage {
    pub fn new(width: usize, height: usize, palette_size: usize, pixels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if palette_size == 0 {
            return Err(Error::InvalidArgument("palette size must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(&v) = pixels.iter().find(|&&v| v as usize >= palette_size) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {v} outside palette of size {palette_size}"
            )));
        }
        Ok(Self {
            width,
            height,
            palette_size,
            pixels,
        })
    }

    pub fn constant(width: usize, height: usize, palette_size: usize, value: u32) -> Result<Self> {
        Self::new(width, height, palette_size, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn palette_size(&self) -> usize {
        self.palette_size
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.pixels[row * self.width + col]
    }
}

/// An 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

/// Per-pixel region labels in `0..num_regions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    width: usize,
    height: usize,
    #[serde(rename = "K")]
    num_regions: usize,
    labels: Vec<u32>,
}

impl Segmentation {
    pub fn new(width: usize, height: usize, num_regions: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("segmentation dimensions must be positive".into()));
        }
        if num_regions == 0 {
            return Err(Error::InvalidArgument("segmentation needs at least one region".into()));
        }
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= num_regions) {
            return Err(Error::InvalidArgument(format!(
                "label {l} outside 0..{num_regions}"
            )));
        }
        Ok(Self {
            width,
            height,
            num_regions,
            labels,
        })
    }

    pub fn uniform(width: usize, height: usize, num_regions: usize, label: u32) -> Result<Self> {
        Self::new(width, height, num_regions, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixel count of every region.
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_regions];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Consumes the segmentation and returns the label buffer.
    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    // Deserialized values bypass `new`.
    pub(crate) fn validated(self) -> Result<Self> {
        Self::new(self.width, self.height, self.num_regions, self.labels)
    }
}

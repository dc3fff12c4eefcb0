//! JSON forms of model sets, segmentations and reports, plus a compact
//! binary form for third-order slices.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Segmentation;
use crate::error::{Error, Result};
use crate::moments::GammaSlices;
use crate::team::ModelSet;

#[derive(Serialize, Deserialize)]
struct ModelSetRepr {
    #[serde(rename = "L")]
    palette_size: usize,
    #[serde(rename = "K")]
    num_regions: usize,
    theta: Vec<Vec<f64>>,
    w: Vec<f64>,
}

pub fn serialize_model_set(models: &ModelSet) -> String {
    let repr = ModelSetRepr {
        palette_size: models.palette_size(),
        num_regions: models.num_regions(),
        theta: models.thetas().to_vec(),
        w: models.weights().to_vec(),
    };
    serde_json::to_string_pretty(&repr).expect("model set serializes")
}

/// Parses a model set, checking shapes and simplex constraints.
pub fn deserialize_model_set(text: &str) -> Result<ModelSet> {
    let repr: ModelSetRepr =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if repr.theta.len() != repr.num_regions || repr.w.len() != repr.num_regions {
        return Err(Error::InvalidModelSet(format!(
            "K = {} but {} models and {} weights",
            repr.num_regions,
            repr.theta.len(),
            repr.w.len()
        )));
    }
    if let Some(t) = repr.theta.iter().find(|t| t.len() != repr.palette_size) {
        return Err(Error::InvalidModelSet(format!(
            "model of length {} in a palette of size {}",
            t.len(),
            repr.palette_size
        )));
    }
    ModelSet::new(repr.theta, repr.w)
}

pub fn serialize_segmentation(seg: &Segmentation) -> String {
    serde_json::to_string(seg).expect("segmentation serializes")
}

pub fn deserialize_segmentation(text: &str) -> Result<Segmentation> {
    let seg: Segmentation = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    seg.validated()
}

/// Writes any serializable value as pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_model_set(models: &ModelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serialize_model_set(models);
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_model_set(path: impl AsRef<Path>) -> Result<ModelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    deserialize_model_set(&text)
}

pub fn write_segmentation(seg: &Segmentation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serialize_segmentation(seg)).map_err(|e| Error::io(path, e))
}

pub fn read_segmentation(path: impl AsRef<Path>) -> Result<Segmentation> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    deserialize_segmentation(&text)
}

const GAMMA_MAGIC: &[u8; 8] = b"TSGAMMA1";

/// Writes slice counts as: magic, `L` and slice count as little-endian
/// `u32`, the slice colors, then every slice row-major.
pub fn write_gamma_slices(gamma: &GammaSlices, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + 4 * (gamma.len() + gamma.raw().len()));
    out.extend_from_slice(GAMMA_MAGIC);
    out.extend_from_slice(&(gamma.palette_size() as u32).to_le_bytes());
    out.extend_from_slice(&(gamma.len() as u32).to_le_bytes());
    for &c in gamma.colors().iter().chain(gamma.raw()) {
        out.extend_from_slice(&c.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_gamma_slices(path: impl AsRef<Path>) -> Result<GammaSlices> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != GAMMA_MAGIC {
        return Err(bad("not a slice file"));
    }
    let words: Vec<u32> = bytes[8..]
        .chunks(4)
        .map(|c| c.try_into().map(u32::from_le_bytes))
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("length is not a whole number of words"))?;
    let (l, n) = (words[0] as usize, words[1] as usize);
    if words.len() != 2 + n + n * l * l {
        return Err(bad("payload size does not match the header"));
    }
    GammaSlices::from_dense(l, words[2..2 + n].to_vec(), words[2 + n..].to_vec())
}

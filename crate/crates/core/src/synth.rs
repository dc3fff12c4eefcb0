//! Ground-truth masks and synthetic images with known region models.
//!
//! Masks are built from fixed geometry scaled to the image, so they are
//! identical on every platform. With `s = min(width, height)`:
//!
//! * label 1 is a disk of radius `0.30 s` centered at `(0.40 W, 0.45 H)`;
//! * label 2 is an annulus around the same center with radii `0.33 s` and
//!   `0.43 s`, missing the quarter `dx > 0, |dy| <= dx` that faces right;
//! * label 3 is an S-shaped band of width `0.04 s` made of two circular arcs
//!   of radius `0.22 s` centered at `(0.50 W, 0.50 H -/+ 0.22 s)`; the upper
//!   arc skips its lower-right quarter and the lower arc its upper-left
//!   quarter, so they meet at the image center;
//! * label 4 is a square of side `0.25 s` centered at `(0.84 W, 0.84 H)`
//!   with three spikes of length `0.10 s` and thickness `max(2, 0.007 s)`
//!   reaching left from its edge.
//!
//! Later labels are painted over earlier ones and everything else is
//! background, label 0. A kind with `K` regions uses labels `0..K`.
//!
//! Pixel processes are IID within regions, except for
//! [`gen_block_texture`], which deliberately correlates nearby pixels.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::imgio::{DiscreteImage, Segmentation};
use crate::moments::{BetaMode, GammaSlices, MomentEstimates};
use crate::team::ModelSet;

const MIN_MASK_SIDE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    TwoRegion,
    ThreeRegion,
    FourRegion,
    FiveRegion,
}

impl MaskKind {
    pub const ALL: [MaskKind; 4] = [
        MaskKind::TwoRegion,
        MaskKind::ThreeRegion,
        MaskKind::FourRegion,
        MaskKind::FiveRegion,
    ];

    pub fn num_regions(self) -> usize {
        match self {
            MaskKind::TwoRegion => 2,
            MaskKind::ThreeRegion => 3,
            MaskKind::FourRegion => 4,
            MaskKind::FiveRegion => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::TwoRegion => "two_region",
            MaskKind::ThreeRegion => "three_region",
            MaskKind::FourRegion => "four_region",
            MaskKind::FiveRegion => "five_region",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown mask kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub width: usize,
    pub height: usize,
}

impl MaskSpec {
    pub fn square(kind: MaskKind, side: usize) -> Self {
        Self {
            kind,
            width: side,
            height: side,
        }
    }
}

/// Builds the ground-truth mask described in the module docs.
pub fn make_mask(spec: &MaskSpec) -> Result<Segmentation> {
    let (w, h) = (spec.width, spec.height);
    if w < MIN_MASK_SIDE || h < MIN_MASK_SIDE {
        return Err(Error::InvalidArgument(format!(
            "masks need at least {MIN_MASK_SIDE}x{MIN_MASK_SIDE} pixels, got {w}x{h}"
        )));
    }
    let k = spec.kind.num_regions();
    let (wf, hf) = (w as f64, h as f64);
    let s = w.min(h) as f64;

    let (cx, cy) = (0.40 * wf, 0.45 * hf);
    let disk_r2 = (0.30 * s) * (0.30 * s);
    let (ring_in2, ring_out2) = ((0.33 * s) * (0.33 * s), (0.43 * s) * (0.43 * s));

    let bowl_r = 0.22 * s;
    let (bowl_x, upper_y, lower_y) = (0.50 * wf, 0.50 * hf - bowl_r, 0.50 * hf + bowl_r);
    let band_in2 = (bowl_r - 0.02 * s) * (bowl_r - 0.02 * s);
    let band_out2 = (bowl_r + 0.02 * s) * (bowl_r + 0.02 * s);

    let sq_half = 0.125 * s;
    let (sq_x, sq_y) = (0.84 * wf, 0.84 * hf);
    let spike_len = 0.10 * s;
    let spike_half = (0.007 * s).max(2.0) / 2.0;
    let spike_rows = [sq_y - sq_half / 2.0, sq_y, sq_y + sq_half / 2.0];

    let mut labels = Vec::with_capacity(w * h);
    for y in 0..h {
        let py = y as f64 + 0.5;
        for x in 0..w {
            let px = x as f64 + 0.5;
            let (dx, dy) = (px - cx, py - cy);
            let d2 = dx * dx + dy * dy;
            let mut label = 0u32;
            if d2 <= disk_r2 {
                label = 1;
            }
            if k >= 3 && d2 >= ring_in2 && d2 <= ring_out2 && !(dx > 0.0 && dy.abs() <= dx) {
                label = 2;
            }
            if k >= 4 {
                let (ux, uy) = (px - bowl_x, py - upper_y);
                let (lx, ly) = (px - bowl_x, py - lower_y);
                let (u2, l2) = (ux * ux + uy * uy, lx * lx + ly * ly);
                let upper = u2 > band_in2 && u2 < band_out2 && !(ux > 0.0 && uy > 0.0);
                let lower = l2 > band_in2 && l2 < band_out2 && !(lx < 0.0 && ly < 0.0);
                if upper || lower {
                    label = 3;
                }
            }
            if k >= 5 {
                let in_square = (px - sq_x).abs() < sq_half && (py - sq_y).abs() < sq_half;
                let in_spike = px < sq_x && px >= sq_x - sq_half - spike_len
                    && spike_rows.iter().any(|r| (py - r).abs() < spike_half);
                if in_square || in_spike {
                    label = 4;
                }
            }
            labels.push(label);
        }
    }
    let seg = Segmentation::new(w, h, k, labels)?;
    if let Some(empty) = seg.region_sizes().iter().position(|&n| n == 0) {
        return Err(Error::EmptyRegion(empty));
    }
    Ok(seg)
}

/// Pixel-generating process of a synthetic image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "process", rename_all = "snake_case")]
pub enum Process {
    /// Truncated normal around evenly spaced means.
    Gmm { sigma: f64 },
    /// Models drawn uniformly from the simplex.
    Rand,
}

impl Process {
    pub fn name(&self) -> &'static str {
        match self {
            Process::Gmm { .. } => "gmm",
            Process::Rand => "rand",
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Process::Gmm { sigma } => Some(*sigma),
            Process::Rand => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(flatten)]
    pub process: Process,
    #[serde(rename = "L")]
    pub palette_size: usize,
    pub seed: u64,
}

/// Generates an image over `mask` according to `cfg`.
pub fn generate(mask: &Segmentation, cfg: &GenConfig) -> Result<DiscreteImage> {
    match cfg.process {
        Process::Gmm { sigma } => gen_gmm(mask, cfg.palette_size, sigma, cfg.seed),
        Process::Rand => gen_rand(mask, cfg.palette_size, cfg.seed),
    }
}

/// One-based means for `k` regions: `round(1 + s (L - 1) / (K - 1))`. A single
/// region sits at the middle of the range.
pub fn gmm_means(k: usize, palette_size: usize) -> Vec<f64> {
    let l = palette_size as f64;
    if k == 1 {
        return vec![((1.0 + l) / 2.0).round()];
    }
    (0..k)
        .map(|s| (1.0 + s as f64 * (l - 1.0) / (k - 1) as f64).round())
        .collect()
}

/// Palette distribution of a normal restricted to `[1, L]` and rounded to the
/// nearest integer, shifted to zero-based indices.
pub fn truncated_normal_pmf(mean: f64, sigma: f64, palette_size: usize) -> Vec<f64> {
    let n = Normal::new(mean, sigma).expect("sigma must be positive");
    let l = palette_size as f64;
    let (lo, hi) = (n.cdf(1.0), n.cdf(l));
    (1..=palette_size)
        .map(|v| {
            let v = v as f64;
            let a = n.cdf((v - 0.5).max(1.0));
            let b = n.cdf((v + 0.5).min(l));
            (b - a).max(0.0) / (hi - lo)
        })
        .collect()
}

fn check_palette(mask: &Segmentation, palette_size: usize) -> Result<()> {
    if palette_size < mask.num_regions().max(2) {
        return Err(Error::InvalidArgument(format!(
            "palette of {palette_size} colors is too small for {} regions",
            mask.num_regions()
        )));
    }
    Ok(())
}

/// Each pixel is an independent truncated-normal draw around its region's
/// mean, sampled by inverting the CDF on the truncated range.
pub fn gen_gmm(mask: &Segmentation, palette_size: usize, sigma: f64, seed: u64) -> Result<DiscreteImage> {
    check_palette(mask, palette_size)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be positive")));
    }
    let l = palette_size as f64;
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let bounds: Vec<(f64, f64, f64)> = gmm_means(mask.num_regions(), palette_size)
        .into_iter()
        .map(|m| (m, std.cdf((1.0 - m) / sigma), std.cdf((l - m) / sigma)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = mask
        .labels()
        .iter()
        .map(|&s| {
            let (mean, a, b) = bounds[s as usize];
            let u: f64 = rng.gen();
            let x = mean + sigma * std.inverse_cdf(a + u * (b - a));
            (x.clamp(1.0, l).round() as u32) - 1
        })
        .collect();
    DiscreteImage::new(mask.width(), mask.height(), palette_size, pixels)
}

/// `k` independent draws from the uniform distribution on the simplex.
pub fn random_models<R: Rng>(k: usize, palette_size: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            let e: Vec<f64> = (0..palette_size).map(|_| rng.sample(Exp1)).collect();
            let total: f64 = e.iter().sum();
            e.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

fn samplers(models: &[Vec<f64>]) -> Vec<WeightedIndex<f64>> {
    models
        .iter()
        .map(|m| WeightedIndex::new(m).expect("models are probability vectors"))
        .collect()
}

/// Random models and an image drawn from them; see [`gen_rand`].
pub fn gen_rand_with_models(
    mask: &Segmentation,
    palette_size: usize,
    seed: u64,
) -> Result<(DiscreteImage, Vec<Vec<f64>>)> {
    check_palette(mask, palette_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = random_models(mask.num_regions(), palette_size, &mut rng);
    let dists = samplers(&models);
    let pixels = mask
        .labels()
        .iter()
        .map(|&s| dists[s as usize].sample(&mut rng) as u32)
        .collect();
    let img = DiscreteImage::new(mask.width(), mask.height(), palette_size, pixels)?;
    Ok((img, models))
}

/// Draws one uniform random model per region, then IID pixels.
pub fn gen_rand(mask: &Segmentation, palette_size: usize, seed: u64) -> Result<DiscreteImage> {
    gen_rand_with_models(mask, palette_size, seed).map(|(img, _)| img)
}

/// Random models with spatially correlated pixels.
///
/// The image is tiled by `block x block` cells at a random offset. Every
/// (cell, region) pair draws one shared value from the region's model; each
/// pixel then takes the shared value with probability `copy_prob` and an
/// independent draw otherwise. Marginals stay exactly the region models and
/// pixels in different cells are independent, so pairs at distance `>= block`
/// along an axis satisfy the independence the estimator relies on while
/// nearby pairs do not. `copy_prob = 0` gives the IID process.
pub fn gen_block_texture(
    mask: &Segmentation,
    palette_size: usize,
    block: usize,
    copy_prob: f64,
    seed: u64,
) -> Result<(DiscreteImage, Vec<Vec<f64>>)> {
    check_palette(mask, palette_size)?;
    if block == 0 || !(0.0..=1.0).contains(&copy_prob) {
        return Err(Error::InvalidArgument(format!(
            "block {block} must be positive and copy_prob {copy_prob} in [0, 1]"
        )));
    }
    let (w, h, k) = (mask.width(), mask.height(), mask.num_regions());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = random_models(k, palette_size, &mut rng);
    let dists = samplers(&models);
    let (ox, oy) = (rng.gen_range(0..block), rng.gen_range(0..block));
    let (bw, bh) = ((w + ox).div_ceil(block), (h + oy).div_ceil(block));
    let shared: Vec<u32> = (0..bw * bh * k)
        .map(|i| dists[i % k].sample(&mut rng) as u32)
        .collect();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = mask.labels()[y * w + x] as usize;
            let cell = ((y + oy) / block) * bw + (x + ox) / block;
            let v = if rng.gen::<f64>() < copy_prob {
                shared[cell * k + s]
            } else {
                dists[s].sample(&mut rng) as u32
            };
            pixels.push(v);
        }
    }
    Ok((DiscreteImage::new(w, h, palette_size, pixels)?, models))
}

/// Reference models of a labeled image: per-region color histograms and
/// region proportions.
pub fn models_from_gt(img: &DiscreteImage, mask: &Segmentation) -> Result<ModelSet> {
    if (img.width(), img.height()) != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, mask is {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let (k, l) = (mask.num_regions(), img.palette_size());
    let mut counts = vec![vec![0u64; l]; k];
    for (&p, &s) in img.pixels().iter().zip(mask.labels()) {
        counts[s as usize][p as usize] += 1;
    }
    let n = img.len() as f64;
    let mut theta = Vec::with_capacity(k);
    let mut w = Vec::with_capacity(k);
    for (s, c) in counts.into_iter().enumerate() {
        let size: u64 = c.iter().sum();
        if size == 0 {
            return Err(Error::EmptyRegion(s));
        }
        theta.push(c.into_iter().map(|x| x as f64 / size as f64).collect());
        w.push(size as f64 / n);
    }
    ModelSet::new(theta, w)
}

/// Population moments of a mixture, keeping slices for the `slices` most
/// probable colors (all colors when `slices >= L`).
pub fn analytic_moments(models: &ModelSet, slices: usize) -> MomentEstimates<f64> {
    let (theta, w) = (models.thetas(), models.weights());
    let l = models.palette_size();
    let alpha: Vec<f64> = (0..l)
        .map(|i| theta.iter().zip(w).map(|(t, wk)| wk * t[i]).sum())
        .collect();
    let beta = DMatrix::from_fn(l, l, |i, j| {
        theta.iter().zip(w).map(|(t, wk)| wk * t[i] * t[j]).sum()
    });
    let mut colors: Vec<u32> = (0..l as u32).collect();
    colors.sort_by(|&a, &b| alpha[b as usize].total_cmp(&alpha[a as usize]).then(a.cmp(&b)));
    colors.truncate(slices.clamp(1, l));
    let mut data = Vec::with_capacity(colors.len() * l * l);
    for &c in &colors {
        let c = c as usize;
        for i in 0..l {
            for j in 0..l {
                data.push(theta.iter().zip(w).map(|(t, wk)| wk * t[c] * t[i] * t[j]).sum());
            }
        }
    }
    MomentEstimates {
        r: 1,
        beta_mode: BetaMode::Ring,
        alpha,
        beta,
        gamma: GammaSlices::from_dense(l, colors, data).expect("shapes are consistent"),
    }
}

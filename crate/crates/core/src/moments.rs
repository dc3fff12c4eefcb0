//! Co-occurrence moment estimation.
//!
//! Three statistics are gathered from a palette-indexed image at an L1
//! distance `r`:
//!
//! * `alpha`, the normalized color histogram;
//! * `beta`, the symmetric joint distribution of color pairs at distance `r`;
//! * a subset of slices of the third-order co-occurrence tensor, one slice per
//!   retained color, accumulated over the axis-aligned triples
//!   `(x, x + (0, r), x + (r, 0))`.
//!
//! Pixel coordinates are `(row, col)`, so `x + (0, r)` is the pixel `r`
//! columns to the right and `x + (r, 0)` the pixel `r` rows below. Pixels whose
//! partners fall outside the image are skipped.
//!
//! The third-order slices stay as raw integer counts; the factorization that
//! consumes them is insensitive to their global scale.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::DiscreteImage;

/// Which pixel pairs contribute to `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaMode {
    /// Only the offsets `(0, r)` and `(r, 0)`.
    Axis,
    /// Every offset on the L1 ring of radius `r`.
    #[default]
    Ring,
}

impl fmt::Display for BetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaMode::Axis => "axis",
            BetaMode::Ring => "ring",
        })
    }
}

impl FromStr for BetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axis" => Ok(BetaMode::Axis),
            "ring" => Ok(BetaMode::Ring),
            other => Err(Error::InvalidArgument(format!("unknown beta mode {other:?}"))),
        }
    }
}

/// Retained slices of the third-order co-occurrence tensor.
///
/// Slice `s` belongs to color `colors()[s]` and is an `L x L` row-major
/// matrix, symmetric in its two indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSlices<C = u32> {
    palette_size: usize,
    colors: Vec<u32>,
    data: Vec<C>,
}

impl<C: Copy> GammaSlices<C> {
    /// Builds a slice set from explicit dense slices.
    pub fn from_dense(palette_size: usize, colors: Vec<u32>, data: Vec<C>) -> Result<Self> {
        if data.len() != colors.len() * palette_size * palette_size {
            return Err(Error::DimensionMismatch(format!(
                "{} slice entries for {} slices of a palette of size {palette_size}",
                data.len(),
                colors.len()
            )));
        }
        if colors.iter().any(|&c| c as usize >= palette_size) {
            return Err(Error::InvalidArgument("slice color outside palette".into()));
        }
        let mut seen = vec![false; palette_size];
        for &c in &colors {
            if std::mem::replace(&mut seen[c as usize], true) {
                return Err(Error::InvalidArgument(format!("slice color {c} repeated")));
            }
        }
        Ok(Self {
            palette_size,
            colors,
            data,
        })
    }

    pub fn palette_size(&self) -> usize {
        self.palette_size
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Colors owning each slice, most frequent first.
    pub fn colors(&self) -> &[u32] {
        &self.colors
    }

    pub fn slice(&self, s: usize) -> &[C] {
        let n = self.palette_size * self.palette_size;
        &self.data[s * n..(s + 1) * n]
    }

    pub fn slice_for_color(&self, color: u32) -> Option<&[C]> {
        self.colors
            .iter()
            .position(|&c| c == color)
            .map(|s| self.slice(s))
    }

    /// Applies `f` to every entry, e.g. to rescale or convert counts.
    pub fn map<D: Copy>(&self, f: impl Fn(C) -> D) -> GammaSlices<D> {
        GammaSlices {
            palette_size: self.palette_size,
            colors: self.colors.clone(),
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn raw(&self) -> &[C] {
        &self.data
    }
}

/// Bundled moment estimates for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimates<C = u32> {
    pub r: usize,
    pub beta_mode: BetaMode,
    pub alpha: Vec<f64>,
    pub beta: DMatrix<f64>,
    pub gamma: GammaSlices<C>,
}

impl<C> MomentEstimates<C> {
    pub fn palette_size(&self) -> usize {
        self.alpha.len()
    }
}

/// Per-color pixel counts.
pub fn histogram(img: &DiscreteImage) -> Vec<u64> {
    let mut counts = vec![0u64; img.palette_size()];
    for &v in img.pixels() {
        counts[v as usize] += 1;
    }
    counts
}

pub fn estimate_alpha(img: &DiscreteImage) -> Vec<f64> {
    let n = img.len() as f64;
    histogram(img).into_iter().map(|c| c as f64 / n).collect()
}

/// L1 ring offsets `(drow, dcol)` with `|drow| + |dcol| = r`, restricted to
/// one representative of each `{d, -d}` pair.
fn half_ring(r: usize) -> Vec<(usize, isize)> {
    let r = r as isize;
    let mut offs = Vec::with_capacity(2 * r as usize);
    // drow = 0, dcol = r
    offs.push((0, r));
    for dr in 1..=r {
        let dc = r - dr;
        offs.push((dr as usize, dc));
        if dc != 0 {
            offs.push((dr as usize, -dc));
        }
    }
    offs
}

/// Symmetric pair counts at distance `r`, before normalization.
///
/// In ring mode every ordered pair `(x, y)` with `|x - y|_1 = r` increments
/// both `(I(x), I(y))` and `(I(y), I(x))`. In axis mode each pair
/// `(x, x + (0, r))` and `(x, x + (r, 0))` does so once.
pub fn pair_counts(img: &DiscreteImage, r: usize, mode: BetaMode) -> Result<Vec<u64>> {
    if r == 0 {
        return Err(Error::InvalidArgument("distance r must be at least 1".into()));
    }
    let l = img.palette_size();
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let mut counts = vec![0u64; l * l];
    let (offsets, inc) = match mode {
        BetaMode::Axis => (vec![(0usize, r as isize), (r, 0)], 1u64),
        // Each unordered pair is met once here and twice in a full ring scan.
        BetaMode::Ring => (half_ring(r), 2u64),
    };
    let mut total = 0u64;
    for &(dr, dc) in &offsets {
        if dr >= h {
            continue;
        }
        let (c0, c1) = if dc >= 0 {
            (0usize, w.saturating_sub(dc as usize))
        } else {
            ((-dc) as usize, w)
        };
        if c0 >= c1 {
            continue;
        }
        for row in 0..h - dr {
            let a_row = &px[row * w..(row + 1) * w];
            let b_row = &px[(row + dr) * w..(row + dr + 1) * w];
            for col in c0..c1 {
                let a = a_row[col] as usize;
                let b = b_row[(col as isize + dc) as usize] as usize;
                counts[a * l + b] += inc;
                counts[b * l + a] += inc;
            }
            total += (c1 - c0) as u64;
        }
    }
    if total == 0 {
        return Err(Error::NoValidPair { r, width: w, height: h });
    }
    Ok(counts)
}

fn normalize_counts(counts: &[u64], l: usize) -> DMatrix<f64> {
    let total: u64 = counts.iter().sum();
    let total = total as f64;
    DMatrix::from_row_slice(l, l, &counts.iter().map(|&c| c as f64 / total).collect::<Vec<_>>())
}

pub fn estimate_beta(img: &DiscreteImage, r: usize, mode: BetaMode) -> Result<DMatrix<f64>> {
    let counts = pair_counts(img, r, mode)?;
    Ok(normalize_counts(&counts, img.palette_size()))
}

/// The `n` most frequent colors, ties broken by smaller index.
pub fn most_frequent_colors(hist: &[u64], n: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..hist.len() as u32).collect();
    order.sort_by(|&a, &b| hist[b as usize].cmp(&hist[a as usize]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

fn check_triple_args(img: &DiscreteImage, r: usize, slices: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidArgument("distance r must be at least 1".into()));
    }
    if slices == 0 {
        return Err(Error::InvalidArgument("slice count must be at least 1".into()));
    }
    if slices > img.palette_size() {
        return Err(Error::InvalidArgument(format!(
            "slice count {slices} exceeds palette size {}",
            img.palette_size()
        )));
    }
    if img.width() <= r || img.height() <= r {
        return Err(Error::InvalidArgument(format!(
            "a {}x{} image holds no triple at distance {r}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

struct SliceAccumulator {
    l: usize,
    slot: Vec<u32>,
    data: Vec<u32>,
}

impl SliceAccumulator {
    fn new(l: usize, colors: &[u32]) -> Self {
        let mut slot = vec![u32::MAX; l];
        for (s, &c) in colors.iter().enumerate() {
            slot[c as usize] = s as u32;
        }
        Self {
            l,
            slot,
            data: vec![0u32; colors.len() * l * l],
        }
    }

    #[inline]
    fn add_pair(&mut self, owner: u32, a: u32, b: u32) {
        let s = self.slot[owner as usize];
        if s != u32::MAX {
            let base = s as usize * self.l * self.l;
            let (a, b) = (a as usize, b as usize);
            self.data[base + a * self.l + b] += 1;
            self.data[base + b * self.l + a] += 1;
        }
    }

    #[inline]
    fn add_triple(&mut self, v1: u32, v2: u32, v3: u32) {
        self.add_pair(v1, v2, v3);
        self.add_pair(v2, v1, v3);
        self.add_pair(v3, v1, v2);
    }
}

/// Third-order slices for the `slices` most frequent colors.
pub fn estimate_gamma_slices(img: &DiscreteImage, r: usize, slices: usize) -> Result<GammaSlices> {
    check_triple_args(img, r, slices)?;
    let colors = most_frequent_colors(&histogram(img), slices);
    Ok(accumulate_gamma(img, r, colors))
}

fn accumulate_gamma(img: &DiscreteImage, r: usize, colors: Vec<u32>) -> GammaSlices {
    let l = img.palette_size();
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let mut acc = SliceAccumulator::new(l, &colors);
    for row in 0..h - r {
        let base = row * w;
        let below = (row + r) * w;
        for col in 0..w - r {
            acc.add_triple(px[base + col], px[base + col + r], px[below + col]);
        }
    }
    GammaSlices {
        palette_size: l,
        colors,
        data: acc.data,
    }
}

/// Runs all three estimators.
pub fn estimate_moments(
    img: &DiscreteImage,
    r: usize,
    slices: usize,
    beta_mode: BetaMode,
) -> Result<MomentEstimates> {
    check_triple_args(img, r, slices)?;
    let hist = histogram(img);
    let n = img.len() as f64;
    let alpha = hist.iter().map(|&c| c as f64 / n).collect();
    let beta = estimate_beta(img, r, beta_mode)?;
    let colors = most_frequent_colors(&hist, slices);
    let gamma = accumulate_gamma(img, r, colors);
    Ok(MomentEstimates {
        r,
        beta_mode,
        alpha,
        beta,
        gamma,
    })
}

/// Sample budget for [`sample_moments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    pub num_pairs: usize,
    pub num_triples: usize,
    pub seed: u64,
    /// Enumerate everything instead of sampling.
    pub exhaustive: bool,
}

/// Moment estimates from randomly drawn pairs and triples.
///
/// Pairs are drawn uniformly from the ordered ring pairs at distance `r`;
/// triples uniformly from the axis-aligned triple anchors. `alpha` is always
/// exact.
pub fn sample_moments(
    img: &DiscreteImage,
    r: usize,
    slices: usize,
    config: &SampleConfig,
) -> Result<MomentEstimates> {
    if config.exhaustive {
        return estimate_moments(img, r, slices, BetaMode::Ring);
    }
    check_triple_args(img, r, slices)?;
    if config.num_pairs == 0 || config.num_triples == 0 {
        return Err(Error::InvalidArgument("sample counts must be positive".into()));
    }
    let l = img.palette_size();
    let (w, h) = (img.width(), img.height());
    let hist = histogram(img);
    let n = img.len() as f64;
    let alpha: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let ring: Vec<(isize, isize)> = half_ring(r)
        .into_iter()
        .flat_map(|(dr, dc)| [(dr as isize, dc), (-(dr as isize), -dc)])
        .collect();
    debug_assert_eq!(ring.len(), 4 * r);
    // check_triple_args guarantees that the (0, r) pair exists.
    let mut pairs = vec![0u64; l * l];
    let mut drawn = 0usize;
    while drawn < config.num_pairs {
        let row = rng.gen_range(0..h) as isize;
        let col = rng.gen_range(0..w) as isize;
        let (dr, dc) = ring[rng.gen_range(0..ring.len())];
        let (r2, c2) = (row + dr, col + dc);
        if r2 < 0 || c2 < 0 || r2 >= h as isize || c2 >= w as isize {
            continue;
        }
        let a = img.get(row as usize, col as usize) as usize;
        let b = img.get(r2 as usize, c2 as usize) as usize;
        pairs[a * l + b] += 1;
        pairs[b * l + a] += 1;
        drawn += 1;
    }
    let beta = normalize_counts(&pairs, l);

    let colors = most_frequent_colors(&hist, slices);
    let mut acc = SliceAccumulator::new(l, &colors);
    for _ in 0..config.num_triples {
        let row = rng.gen_range(0..h - r);
        let col = rng.gen_range(0..w - r);
        acc.add_triple(img.get(row, col), img.get(row, col + r), img.get(row + r, col));
    }
    Ok(MomentEstimates {
        r,
        beta_mode: BetaMode::Ring,
        alpha,
        beta,
        gamma: GammaSlices {
            palette_size: l,
            colors,
            data: acc.data,
        },
    })
}

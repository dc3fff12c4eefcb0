//! Palette reduction by recursive 2-means splits in RGB space.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{DiscreteImage, RgbImage};

const MAX_FARTHEST_CANDIDATES: usize = 4096;
const MAX_LLOYD_ITERATIONS: usize = 25;

/// Cluster centers of a quantized image. Index `i` is the mean color of the
/// pixels that received palette index `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorPalette {
    pub centroids: Vec<[f64; 3]>,
}

struct Leaf {
    members: Vec<usize>,
    sse: f64,
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

fn weighted_mean(members: &[usize], colors: &[[f64; 3]], counts: &[f64]) -> [f64; 3] {
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for &m in members {
        for c in 0..3 {
            acc[c] += counts[m] * colors[m][c];
        }
        total += counts[m];
    }
    acc.map(|x| x / total)
}

fn weighted_sse(members: &[usize], colors: &[[f64; 3]], counts: &[f64]) -> f64 {
    let mean = weighted_mean(members, colors, counts);
    members
        .iter()
        .map(|&m| counts[m] * dist2(colors[m], mean))
        .sum()
}

/// Indices of the two mutually farthest colors among `members`. Larger leaves
/// are searched over a seeded subsample.
fn farthest_pair(members: &[usize], colors: &[[f64; 3]], rng: &mut ChaCha8Rng) -> (usize, usize) {
    let candidates: Vec<usize> = if members.len() > MAX_FARTHEST_CANDIDATES {
        let mut picks = sample(rng, members.len(), MAX_FARTHEST_CANDIDATES).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(|i| members[i]).collect()
    } else {
        members.to_vec()
    };
    let mut best = (candidates[0], candidates[1], -1.0);
    for (i, &a) in candidates.iter().enumerate() {
        for &b in &candidates[i + 1..] {
            let d = dist2(colors[a], colors[b]);
            if d > best.2 {
                best = (a, b, d);
            }
        }
    }
    (best.0, best.1)
}

fn two_means(
    members: &[usize],
    colors: &[[f64; 3]],
    counts: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let (a, b) = farthest_pair(members, colors, rng);
    let mut centers = [colors[a], colors[b]];
    let mut side: Vec<bool> = vec![false; members.len()];
    for iter in 0..MAX_LLOYD_ITERATIONS {
        let next: Vec<bool> = members
            .iter()
            .map(|&m| dist2(colors[m], centers[1]) < dist2(colors[m], centers[0]))
            .collect();
        if iter > 0 && next == side {
            break;
        }
        let ones = next.iter().filter(|&&s| s).count();
        if ones == 0 || ones == members.len() {
            break;
        }
        side = next;
        let (left, right) = split_by(members, &side);
        centers = [
            weighted_mean(&left, colors, counts),
            weighted_mean(&right, colors, counts),
        ];
    }
    split_by(members, &side)
}

fn split_by(members: &[usize], side: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (&m, &s) in members.iter().zip(side) {
        if s {
            right.push(m);
        } else {
            left.push(m);
        }
    }
    (left, right)
}

/// Reduces `img` to at most `n` colors.
///
/// The leaf with the largest weighted squared error is split next; the new
/// child always takes the next free index. The returned image has palette
/// size `n` even when fewer distinct colors exist.
pub fn quantize_colors(img: &RgbImage, n: usize, seed: u64) -> Result<(DiscreteImage, ColorPalette)> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of colors must be positive".into()));
    }
    if img.pixels().is_empty() {
        return Err(Error::InvalidArgument("image has no pixels".into()));
    }
    let mut distinct: BTreeMap<[u8; 3], u64> = BTreeMap::new();
    for &p in img.pixels() {
        *distinct.entry(p).or_default() += 1;
    }
    let keys: Vec<[u8; 3]> = distinct.keys().copied().collect();
    let colors: Vec<[f64; 3]> = keys.iter().map(|k| k.map(f64::from)).collect();
    let counts: Vec<f64> = distinct.values().map(|&c| c as f64).collect();

    let all: Vec<usize> = (0..colors.len()).collect();
    let mut leaves = vec![Leaf {
        sse: weighted_sse(&all, &colors, &counts),
        members: all,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while leaves.len() < n {
        let Some(target) = leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| l.members.len() > 1)
            .max_by(|a, b| a.1.sse.total_cmp(&b.1.sse).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
        else {
            break;
        };
        let (left, right) = two_means(&leaves[target].members, &colors, &counts, &mut rng);
        if left.is_empty() || right.is_empty() {
            break;
        }
        leaves[target] = Leaf {
            sse: weighted_sse(&left, &colors, &counts),
            members: left,
        };
        leaves.push(Leaf {
            sse: weighted_sse(&right, &colors, &counts),
            members: right,
        });
    }

    let mut index_of = vec![0u32; colors.len()];
    for (li, leaf) in leaves.iter().enumerate() {
        for &m in &leaf.members {
            index_of[m] = li as u32;
        }
    }
    let pixels = img
        .pixels()
        .iter()
        .map(|p| index_of[keys.binary_search(p).expect("color was counted")])
        .collect();
    let centroids = leaves
        .iter()
        .map(|l| weighted_mean(&l.members, &colors, &counts))
        .collect();
    let out = DiscreteImage::new(img.width(), img.height(), n, pixels)?;
    Ok((out, ColorPalette { centroids }))
}

/// Sum over pixels of the squared distance to the assigned centroid.
pub fn quantization_sse(img: &RgbImage, quantized: &DiscreteImage, palette: &ColorPalette) -> f64 {
    img.pixels()
        .iter()
        .zip(quantized.pixels())
        .map(|(p, &q)| dist2(p.map(f64::from), palette.centroids[q as usize]))
        .sum()
}

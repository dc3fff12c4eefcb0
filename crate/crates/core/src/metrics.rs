//! Scores for estimated models and segmentations against ground truth.
//!
//! Set-level scores are matched over all `K!` relabelings, which is cheap for
//! the region counts used here. Per-region terms are summed in sorted order
//! so that relabeling either argument, or swapping the arguments of
//! [`mean_jaccard`], gives bit-identical results.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::Segmentation;
use crate::team::ModelSet;

const SIMPLEX_TOL: f64 = 1e-6;

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x >= -SIMPLEX_TOL)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidArgument(format!("{name} is not a probability vector (sum {sum})")));
    }
    Ok(())
}

/// `-ln sum_i sqrt(p_i q_i)`, or `+inf` when the supports are disjoint.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!("lengths {} and {}", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    if p == q {
        return Ok(0.0);
    }
    let bc: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| (a.max(0.0) * b.max(0.0)).sqrt())
        .sum();
    if bc <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-bc.min(1.0).ln())
}

fn sorted_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.into_iter().sum::<f64>() / n
}

/// Smallest mean Bhattacharyya distance between matched models, and the
/// matching: ground-truth region `k` pairs with estimated region `perm[k]`.
/// Ties keep the lexicographically first permutation.
pub fn model_set_distance(gt: &ModelSet, est: &ModelSet) -> Result<(f64, Vec<usize>)> {
    let k = gt.num_regions();
    if est.num_regions() != k || est.palette_size() != gt.palette_size() {
        return Err(Error::DimensionMismatch(format!(
            "{} models over {} colors against {} over {}",
            k,
            gt.palette_size(),
            est.num_regions(),
            est.palette_size()
        )));
    }
    let mut pair = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            pair[i * k + j] = bhattacharyya(gt.theta(i), est.theta(j))?;
        }
    }
    Ok(best_permutation(k, |perm| {
        sorted_mean((0..k).map(|i| pair[i * k + perm[i]]).collect())
    }, false))
}

fn best_permutation(k: usize, score: impl Fn(&[usize]) -> f64, maximize: bool) -> (f64, Vec<usize>) {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let s = score(&perm);
        let better = match &best {
            None => true,
            Some((b, _)) if maximize => s > *b,
            Some((b, _)) => s < *b,
        };
        if better {
            best = Some((s, perm));
        }
    }
    best.expect("at least one permutation")
}

/// Bhattacharyya distance between `w` and `w_hat` after reordering `w_hat`
/// by the model matching `perm`.
pub fn proportions_distance(w: &[f64], w_hat: &[f64], perm: &[usize]) -> Result<f64> {
    if w.len() != w_hat.len() || perm.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "proportions of length {} and {} with a matching of length {}",
            w.len(),
            w_hat.len(),
            perm.len()
        )));
    }
    if !perm.iter().copied().sorted().eq(0..perm.len()) {
        return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
    }
    let matched: Vec<f64> = perm.iter().map(|&j| w_hat[j]).collect();
    bhattacharyya(w, &matched)
}

/// Intersection over union of two pixel sets given as membership masks.
/// Two empty sets score 1.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    assert_eq!(a.len(), b.len(), "sets over different domains");
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Largest mean per-region Jaccard index over all relabelings of `est`, and
/// the relabeling: ground-truth region `k` pairs with estimated label
/// `perm[k]`.
pub fn mean_jaccard(gt: &Segmentation, est: &Segmentation) -> Result<(f64, Vec<usize>)> {
    let k = gt.num_regions();
    if (gt.width(), gt.height(), k) != (est.width(), est.height(), est.num_regions()) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} with {} labels against {}x{} with {}",
            gt.width(),
            gt.height(),
            k,
            est.width(),
            est.height(),
            est.num_regions()
        )));
    }
    let mut confusion = vec![0usize; k * k];
    for (&g, &e) in gt.labels().iter().zip(est.labels()) {
        confusion[g as usize * k + e as usize] += 1;
    }
    let gt_sizes = gt.region_sizes();
    let est_sizes = est.region_sizes();
    let index = |i: usize, j: usize| {
        let inter = confusion[i * k + j];
        let union = gt_sizes[i] + est_sizes[j] - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    };
    Ok(best_permutation(k, |perm| {
        sorted_mean((0..k).map(|i| index(i, perm[i])).collect())
    }, true))
}

mod nonfinite {
    //! JSON has no infinity; `null` stands for `+inf`.
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Scores of one estimate against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(with = "nonfinite")]
    pub d_b_models: f64,
    #[serde(with = "nonfinite")]
    pub d_b_weights: f64,
    pub mean_jaccard: f64,
    pub model_permutation: Vec<usize>,
    pub seg_permutation: Vec<usize>,
    /// Wall times in seconds, by stage name.
    pub timings: BTreeMap<String, f64>,
}

/// Scores models and labels together. Passing `None` for either estimate
/// skips it: distances become `+inf`, overlap zero, and its permutation empty.
pub fn evaluate(
    gt_models: &ModelSet,
    est_models: Option<&ModelSet>,
    gt_seg: &Segmentation,
    est_seg: Option<&Segmentation>,
) -> Result<EvalReport> {
    let (d_b_models, d_b_weights, model_permutation) = match est_models {
        Some(est) => {
            let (d, perm) = model_set_distance(gt_models, est)?;
            let dw = proportions_distance(gt_models.weights(), est.weights(), &perm)?;
            (d, dw, perm)
        }
        None => (f64::INFINITY, f64::INFINITY, Vec::new()),
    };
    let (mean_jaccard, seg_permutation) = match est_seg {
        Some(est) => mean_jaccard(gt_seg, est)?,
        None => (0.0, Vec::new()),
    };
    Ok(EvalReport {
        d_b_models,
        d_b_weights,
        mean_jaccard,
        model_permutation,
        seg_permutation,
        timings: BTreeMap::new(),
    })
}

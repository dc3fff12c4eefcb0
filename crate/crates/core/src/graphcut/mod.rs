//! MRF segmentation with estimated appearance models.
//!
//! The energy of a labeling `S` is
//! `E(S) = sum_x -ln theta_{S(x)}(I(x)) + lambda * |{(x, y) 4-adjacent : S(x) != S(y)}|`.
//! Two labels are minimized exactly by one s-t cut; more labels by repeated
//! swap moves, each of which is itself a binary cut.

pub mod maxflow;

use log::debug;

use crate::error::{Error, Result};
use crate::imgio::{DiscreteImage, Segmentation};
use crate::moments::{estimate_moments, BetaMode};
use crate::team::{team_estimate, ModelSet};
use maxflow::{Graph, Side};

pub const DEFAULT_EPS_PROB: f64 = 1e-12;
pub const DEFAULT_MAX_CYCLES: usize = 20;
/// A swap move must lower the energy by more than this to be accepted.
pub const MIN_IMPROVEMENT: f64 = 1e-9;

/// Per-pixel negative log-likelihoods, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryCosts {
    width: usize,
    height: usize,
    num_labels: usize,
    costs: Vec<f64>,
}

impl UnaryCosts {
    /// Wraps a pixel-major cost table (`costs[pixel * K + label]`).
    pub fn new(width: usize, height: usize, num_labels: usize, costs: Vec<f64>) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidArgument("at least one label is required".into()));
        }
        if costs.len() != width * height * num_labels {
            return Err(Error::DimensionMismatch(format!(
                "{} costs for a {width}x{height} image with {num_labels} labels",
                costs.len()
            )));
        }
        if let Some(c) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::InvalidArgument(format!("unary cost {c} is not a finite nonnegative number")));
        }
        Ok(Self {
            width,
            height,
            num_labels,
            costs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cost(&self, pixel: usize, label: usize) -> f64 {
        self.costs[pixel * self.num_labels + label]
    }

    pub fn pixel_costs(&self, pixel: usize) -> &[f64] {
        &self.costs[pixel * self.num_labels..(pixel + 1) * self.num_labels]
    }

    /// Multiplies every cost by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            costs: self.costs.iter().map(|c| c * factor).collect(),
            ..self.clone()
        }
    }
}

/// Smoothness weight and likelihood floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub lambda: f64,
    pub eps_prob: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            eps_prob: DEFAULT_EPS_PROB,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda {} must be nonnegative", self.lambda)));
        }
        if !(self.eps_prob > 0.0 && self.eps_prob < 1.0) {
            return Err(Error::InvalidArgument(format!("eps_prob {} outside (0, 1)", self.eps_prob)));
        }
        Ok(())
    }
}

/// `cost(x, k) = -ln max(theta_k(I(x)), eps_prob)`.
pub fn unary_costs(img: &DiscreteImage, models: &ModelSet, eps_prob: f64) -> Result<UnaryCosts> {
    if models.palette_size() != img.palette_size() {
        return Err(Error::DimensionMismatch(format!(
            "models over {} colors, image over {}",
            models.palette_size(),
            img.palette_size()
        )));
    }
    if !(eps_prob > 0.0 && eps_prob < 1.0) {
        return Err(Error::InvalidArgument(format!("eps_prob {eps_prob} outside (0, 1)")));
    }
    let k = models.num_regions();
    // One table per color keeps the per-pixel work to a copy.
    let table: Vec<f64> = (0..img.palette_size())
        .flat_map(|i| (0..k).map(move |s| (i, s)))
        .map(|(i, s)| -models.theta(s)[i].max(eps_prob).ln())
        .map(|c| if c == 0.0 { 0.0 } else { c })
        .collect();
    let mut costs = Vec::with_capacity(img.len() * k);
    for &p in img.pixels() {
        let p = p as usize;
        costs.extend_from_slice(&table[p * k..(p + 1) * k]);
    }
    UnaryCosts::new(img.width(), img.height(), k, costs)
}

/// Number of 4-adjacent pixel pairs with different labels.
pub fn boundary_length(seg: &Segmentation) -> usize {
    let (w, h) = (seg.width(), seg.height());
    let lab = seg.labels();
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && lab[i] != lab[i + 1] {
                n += 1;
            }
            if y + 1 < h && lab[i] != lab[i + w] {
                n += 1;
            }
        }
    }
    n
}

/// Unary sum plus `lambda` times the boundary length.
///
/// # Panics
/// If the labeling and cost table differ in size or label count.
pub fn energy(seg: &Segmentation, costs: &UnaryCosts, lambda: f64) -> f64 {
    assert_eq!((seg.width(), seg.height()), (costs.width, costs.height), "size mismatch");
    assert_eq!(seg.num_regions(), costs.num_labels, "label count mismatch");
    let data: f64 = seg
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| costs.cost(i, l as usize))
        .sum();
    data + lambda * boundary_length(seg) as f64
}

/// Per-pixel cheapest label, lowest index on ties.
pub fn argmin_labels(costs: &UnaryCosts) -> Segmentation {
    let labels = (0..costs.len())
        .map(|i| {
            let row = costs.pixel_costs(i);
            let mut best = 0;
            for (k, &c) in row.iter().enumerate().skip(1) {
                if c < row[best] {
                    best = k;
                }
            }
            best as u32
        })
        .collect();
    Segmentation::new(costs.width, costs.height, costs.num_labels, labels)
        .expect("argmin labels are in range")
}

/// Solves a binary labeling over the pixels in `nodes` (image indices).
/// `node_of[pixel]` is the node index or `usize::MAX` for pixels outside the
/// problem. Returns `true` for nodes that take the second label.
fn binary_cut(
    width: usize,
    height: usize,
    nodes: &[usize],
    node_of: &[usize],
    cost0: impl Fn(usize) -> f64,
    cost1: impl Fn(usize) -> f64,
    lambda: f64,
) -> Vec<bool> {
    let mut g = Graph::new(nodes.len(), if lambda > 0.0 { 2 * nodes.len() } else { 0 });
    for (n, &p) in nodes.iter().enumerate() {
        // Source side means the first label, paid through the sink arc.
        g.add_tweights(n, cost1(p), cost0(p));
    }
    if lambda > 0.0 {
        for (n, &p) in nodes.iter().enumerate() {
            let (x, y) = (p % width, p / width);
            if x + 1 < width && node_of[p + 1] != usize::MAX {
                g.add_edge(n, node_of[p + 1], lambda, lambda);
            }
            if y + 1 < height && node_of[p + width] != usize::MAX {
                g.add_edge(n, node_of[p + width], lambda, lambda);
            }
        }
    }
    g.maxflow();
    g.min_cut().into_iter().map(|s| s == Side::Sink).collect()
}

/// Global minimizer of the two-label energy. Pixels that could take either
/// label at equal cost get label 0.
pub fn min_cut_binary(costs: &UnaryCosts, lambda: f64) -> Result<Segmentation> {
    if costs.num_labels != 2 {
        return Err(Error::InvalidArgument(format!(
            "binary cut needs 2 labels, got {}",
            costs.num_labels
        )));
    }
    let nodes: Vec<usize> = (0..costs.len()).collect();
    let second = binary_cut(
        costs.width,
        costs.height,
        &nodes,
        &nodes,
        |p| costs.cost(p, 0),
        |p| costs.cost(p, 1),
        lambda,
    );
    let labels = second.into_iter().map(u32::from).collect();
    Segmentation::new(costs.width, costs.height, 2, labels)
}

/// Result of [`ab_swap_traced`].
#[derive(Debug, Clone)]
pub struct SwapOutcome {
    pub segmentation: Segmentation,
    /// Energy of the initial labeling followed by the energy after every
    /// accepted move.
    pub energy_trace: Vec<f64>,
    pub cycles: usize,
}

/// Swap-move minimization; see [`ab_swap_traced`].
pub fn ab_swap(costs: &UnaryCosts, lambda: f64, init: &Segmentation, max_cycles: usize) -> Result<Segmentation> {
    Ok(ab_swap_traced(costs, lambda, init, max_cycles)?.segmentation)
}

/// Visits label pairs `(a, b)` in ascending order, re-partitioning the pixels
/// currently labeled `a` or `b` by a binary cut. A move is kept only if it
/// lowers the energy by more than [`MIN_IMPROVEMENT`]. Stops after a cycle
/// with no accepted move or after `max_cycles` cycles.
pub fn ab_swap_traced(
    costs: &UnaryCosts,
    lambda: f64,
    init: &Segmentation,
    max_cycles: usize,
) -> Result<SwapOutcome> {
    let k = costs.num_labels;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("swap moves need at least 2 labels, got {k}")));
    }
    if (init.width(), init.height(), init.num_regions()) != (costs.width, costs.height, k) {
        return Err(Error::DimensionMismatch(format!(
            "initial labeling is {}x{} with {} labels, costs are {}x{} with {k}",
            init.width(),
            init.height(),
            init.num_regions(),
            costs.width,
            costs.height
        )));
    }
    let mut seg = init.clone();
    let mut current = energy(&seg, costs, lambda);
    let mut trace = vec![current];
    let mut node_of = vec![usize::MAX; costs.len()];
    let mut cycles = 0;
    while cycles < max_cycles {
        cycles += 1;
        let mut improved = false;
        for a in 0..k {
            for b in a + 1..k {
                let nodes: Vec<usize> = seg
                    .labels()
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l as usize == a || l as usize == b)
                    .map(|(i, _)| i)
                    .collect();
                if nodes.is_empty() {
                    continue;
                }
                for (n, &p) in nodes.iter().enumerate() {
                    node_of[p] = n;
                }
                // Neighbors outside the pair disagree with both labels, so
                // their boundary terms are equal on both sides and drop out.
                let to_b = binary_cut(
                    costs.width,
                    costs.height,
                    &nodes,
                    &node_of,
                    |p| costs.cost(p, a),
                    |p| costs.cost(p, b),
                    lambda,
                );
                for &p in &nodes {
                    node_of[p] = usize::MAX;
                }
                let mut labels = seg.labels().to_vec();
                for (&p, &tb) in nodes.iter().zip(&to_b) {
                    labels[p] = if tb { b as u32 } else { a as u32 };
                }
                let candidate = Segmentation::new(costs.width, costs.height, k, labels)?;
                let e = energy(&candidate, costs, lambda);
                if e < current - MIN_IMPROVEMENT {
                    debug!("swap ({a}, {b}) in cycle {cycles}: {current} -> {e}");
                    seg = candidate;
                    current = e;
                    trace.push(e);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(SwapOutcome {
        segmentation: seg,
        energy_trace: trace,
        cycles,
    })
}

/// Settings for the full estimate-then-segment pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamsegParams {
    pub num_regions: usize,
    pub r: usize,
    pub slices: usize,
    pub beta_mode: BetaMode,
    pub energy: EnergyParams,
    pub max_cycles: usize,
}

impl TeamsegParams {
    pub fn new(num_regions: usize, r: usize, slices: usize, lambda: f64) -> Self {
        Self {
            num_regions,
            r,
            slices,
            beta_mode: BetaMode::default(),
            energy: EnergyParams {
                lambda,
                ..EnergyParams::default()
            },
            max_cycles: DEFAULT_MAX_CYCLES,
        }
    }
}

/// Segments `img` with already-estimated models: exact cut for two regions,
/// swap moves from the per-pixel argmin otherwise.
pub fn segment_with_models(
    img: &DiscreteImage,
    models: &ModelSet,
    energy_params: &EnergyParams,
    max_cycles: usize,
) -> Result<Segmentation> {
    energy_params.validate()?;
    let costs = unary_costs(img, models, energy_params.eps_prob)?;
    match models.num_regions() {
        1 => Segmentation::uniform(img.width(), img.height(), 1, 0),
        2 => min_cut_binary(&costs, energy_params.lambda),
        _ => ab_swap(&costs, energy_params.lambda, &argmin_labels(&costs), max_cycles),
    }
}

/// Moments, model estimation and segmentation in one call.
pub fn teamseg(img: &DiscreteImage, params: &TeamsegParams) -> Result<(ModelSet, Segmentation)> {
    let moments = estimate_moments(img, params.r, params.slices, params.beta_mode)?;
    let models = team_estimate(&moments, params.num_regions)?;
    let seg = segment_with_models(img, &models, &params.energy, params.max_cycles)?;
    Ok((models, seg))
}

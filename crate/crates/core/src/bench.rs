//! Seeded experiment grids over synthetic images.
//!
//! Every cell of a grid generates `trials` images with seeds
//! `seed0, seed0 + 1, ...`, estimates models, optionally segments, and
//! aggregates the scores into one CSV row. Seeds depend only on the trial
//! index, so cells that differ only in estimator settings see the same
//! images. All columns except the wall times are reproducible bit for bit.

use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphcut::{segment_with_models, EnergyParams, DEFAULT_MAX_CYCLES};
use crate::imgio::{DiscreteImage, Segmentation};
use crate::metrics::{mean_jaccard, model_set_distance, proportions_distance};
use crate::moments::{estimate_moments, BetaMode};
use crate::synth::{gen_block_texture, generate, make_mask, models_from_gt, GenConfig, MaskKind, MaskSpec, Process};
use crate::team::{team_estimate, ModelSet};

pub const DEFAULT_TRIALS: usize = 10;
pub const FULL_TRIALS: usize = 50;

/// How many third-order slices to keep for a palette of size `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceCount {
    /// `ceil(L / 3)`.
    ThirdOfPalette,
    Fixed(usize),
}

impl SliceCount {
    pub fn resolve(self, palette_size: usize) -> usize {
        match self {
            SliceCount::ThirdOfPalette => palette_size.div_ceil(3),
            SliceCount::Fixed(n) => n.min(palette_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub masks: Vec<MaskKind>,
    pub processes: Vec<Process>,
    pub sizes: Vec<usize>,
    #[serde(rename = "L")]
    pub palette_sizes: Vec<usize>,
    pub slices: Vec<SliceCount>,
    pub radii: Vec<usize>,
    pub lambda: f64,
    pub beta_mode: BetaMode,
    pub trials: usize,
    pub seed0: u64,
    /// Run the segmentation stage; estimation-only sweeps leave the Jaccard
    /// columns empty.
    pub segment: bool,
    /// Run the trials of a cell on the thread pool.
    pub parallel: bool,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("a grid needs at least one trial".into()));
        }
        let empty = [
            ("masks", self.masks.is_empty()),
            ("processes", self.processes.is_empty()),
            ("sizes", self.sizes.is_empty()),
            ("L", self.palette_sizes.is_empty()),
            ("slices", self.slices.is_empty()),
            ("radii", self.radii.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::InvalidArgument(format!("grid axis {name} is empty")));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda {} must be nonnegative", self.lambda)));
        }
        Ok(())
    }

    /// Cells in row order: mask, process, size, L, r, slices.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mask in &self.masks {
            for &process in &self.processes {
                for &size in &self.sizes {
                    for &palette_size in &self.palette_sizes {
                        for &r in &self.radii {
                            for &slices in &self.slices {
                                out.push(Cell {
                                    mask,
                                    process,
                                    size,
                                    palette_size,
                                    r,
                                    slices: slices.resolve(palette_size),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mask: MaskKind,
    pub process: Process,
    pub size: usize,
    pub palette_size: usize,
    pub r: usize,
    pub slices: usize,
}

/// One aggregated grid cell. Empty optional fields serialize as empty CSV
/// cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mask: MaskKind,
    pub process: String,
    pub sigma: Option<f64>,
    #[serde(rename = "L")]
    pub palette_size: usize,
    pub size: usize,
    pub r: usize,
    pub slices: usize,
    pub lambda: f64,
    pub trials: usize,
    pub db_theta_mean: Option<f64>,
    pub db_theta_std: Option<f64>,
    pub db_w_mean: Option<f64>,
    pub jac_mean: Option<f64>,
    pub jac_std: Option<f64>,
    pub t_est_s: Option<f64>,
    pub t_seg_s: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    /// Blanks the wall-time columns, leaving only reproducible values.
    pub fn without_timings(mut self) -> Self {
        self.t_est_s = None;
        self.t_seg_s = None;
        self
    }
}

struct TrialScore {
    db_theta: f64,
    db_w: f64,
    jaccard: Option<f64>,
    t_est: f64,
    t_seg: f64,
}

/// Mean and sample standard deviation, summed in input order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Estimates models for `img` and, if asked, segments it. Returns the models,
/// the labels and the two stage wall times.
pub fn estimate_and_segment(
    img: &DiscreteImage,
    k: usize,
    r: usize,
    slices: usize,
    beta_mode: BetaMode,
    lambda: f64,
    segment: bool,
) -> Result<(ModelSet, Option<Segmentation>, f64, f64)> {
    let start = Instant::now();
    let moments = estimate_moments(img, r, slices, beta_mode)?;
    let models = team_estimate(&moments, k)?;
    let t_est = start.elapsed().as_secs_f64();
    if !segment {
        return Ok((models, None, t_est, 0.0));
    }
    let start = Instant::now();
    let params = EnergyParams {
        lambda,
        ..EnergyParams::default()
    };
    let seg = segment_with_models(img, &models, &params, DEFAULT_MAX_CYCLES)?;
    Ok((models, Some(seg), t_est, start.elapsed().as_secs_f64()))
}

fn score(
    img: &DiscreteImage,
    mask: &Segmentation,
    models: &ModelSet,
    seg: Option<&Segmentation>,
) -> Result<(f64, f64, Option<f64>)> {
    let gt = models_from_gt(img, mask)?;
    let (db, perm) = model_set_distance(&gt, models)?;
    let dw = proportions_distance(gt.weights(), models.weights(), &perm)?;
    let jac = seg.map(|s| mean_jaccard(mask, s)).transpose()?.map(|(j, _)| j);
    Ok((db, dw, jac))
}

fn run_trial(grid: &ExperimentGrid, cell: &Cell, mask: &Segmentation, trial: usize) -> Result<TrialScore> {
    let cfg = GenConfig {
        process: cell.process,
        palette_size: cell.palette_size,
        seed: grid.seed0 + trial as u64,
    };
    let img = generate(mask, &cfg)?;
    let (models, seg, t_est, t_seg) = estimate_and_segment(
        &img,
        mask.num_regions(),
        cell.r,
        cell.slices,
        grid.beta_mode,
        grid.lambda,
        grid.segment,
    )?;
    let (db_theta, db_w, jaccard) = score(&img, mask, &models, seg.as_ref())?;
    Ok(TrialScore {
        db_theta,
        db_w,
        jaccard,
        t_est,
        t_seg,
    })
}

/// Runs every trial of one cell and aggregates them. Failures are recorded
/// in the row.
pub fn run_cell(grid: &ExperimentGrid, cell: &Cell) -> CellResult {
    let mut row = CellResult {
        mask: cell.mask,
        process: cell.process.name().to_string(),
        sigma: cell.process.sigma(),
        palette_size: cell.palette_size,
        size: cell.size,
        r: cell.r,
        slices: cell.slices,
        lambda: grid.lambda,
        trials: grid.trials,
        db_theta_mean: None,
        db_theta_std: None,
        db_w_mean: None,
        jac_mean: None,
        jac_std: None,
        t_est_s: None,
        t_seg_s: None,
        error: None,
    };
    let mask = match make_mask(&MaskSpec::square(cell.mask, cell.size)) {
        Ok(m) => m,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let results: Vec<Result<TrialScore>> = if grid.parallel {
        (0..grid.trials)
            .into_par_iter()
            .map(|t| run_trial(grid, cell, &mask, t))
            .collect()
    } else {
        (0..grid.trials).map(|t| run_trial(grid, cell, &mask, t)).collect()
    };
    let scores: Vec<TrialScore> = match results.into_iter().collect() {
        Ok(s) => s,
        Err(e) => {
            warn!("cell {cell:?} failed: {e}");
            row.error = Some(e.to_string());
            return row;
        }
    };
    let pick = |f: fn(&TrialScore) -> f64| scores.iter().map(f).collect::<Vec<f64>>();
    let (db_mean, db_std) = mean_std(&pick(|s| s.db_theta));
    row.db_theta_mean = Some(db_mean);
    row.db_theta_std = Some(db_std);
    row.db_w_mean = Some(mean_std(&pick(|s| s.db_w)).0);
    if grid.segment {
        let jac: Vec<f64> = scores.iter().filter_map(|s| s.jaccard).collect();
        let (m, sd) = mean_std(&jac);
        row.jac_mean = Some(m);
        row.jac_std = Some(sd);
        row.t_seg_s = Some(mean_std(&pick(|s| s.t_seg)).0);
    }
    row.t_est_s = Some(mean_std(&pick(|s| s.t_est)).0);
    row
}

/// Appends rows to a CSV file, flushing after each one.
pub struct CsvSink {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl CsvSink {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            writer: csv::Writer::from_writer(file),
            path: path.to_path_buf(),
        })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        let io = |e: csv::Error| Error::io(&self.path, std::io::Error::other(e));
        self.writer.serialize(row).map_err(io)?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Runs every cell in order. With `out`, rows are also appended to that CSV
/// as they finish. With `timings = false` the wall-time columns are left
/// empty so the output is fully reproducible.
pub fn run_grid(grid: &ExperimentGrid, out: Option<&Path>, timings: bool) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let mut sink = out.map(CsvSink::create).transpose()?;
    let mut rows = Vec::new();
    for cell in grid.cells() {
        let mut row = run_cell(grid, &cell);
        if !timings {
            row = row.without_timings();
        }
        info!(
            "{} {} L={} size={} r={} slices={}: D_B={:?} J={:?}",
            row.mask, row.process, row.palette_size, row.size, row.r, row.slices, row.db_theta_mean, row.jac_mean
        );
        if let Some(s) = sink.as_mut() {
            s.write(&row)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Images whose pixels are correlated over short distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSweepConfig {
    pub mask: MaskKind,
    pub size: usize,
    #[serde(rename = "L")]
    pub palette_size: usize,
    /// Cell side of the block texture; see [`gen_block_texture`].
    pub block: usize,
    /// Probability that a pixel copies its cell's shared value; 0 is IID.
    pub copy_prob: f64,
    pub radii: Vec<usize>,
    pub slices: SliceCount,
    pub lambda: f64,
    pub beta_mode: BetaMode,
    pub trials: usize,
    pub seed0: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSweepRow {
    pub mask: MaskKind,
    pub block: usize,
    pub copy_prob: f64,
    #[serde(rename = "L")]
    pub palette_size: usize,
    pub size: usize,
    pub r: usize,
    pub slices: usize,
    pub lambda: f64,
    pub trials: usize,
    pub db_theta_mean: f64,
    pub jac_mean: f64,
    pub jac_std: f64,
}

/// Mean matched Jaccard per radius on block-texture images. Every radius
/// sees the same images.
pub fn r_sweep(cfg: &RSweepConfig) -> Result<Vec<RSweepRow>> {
    if cfg.trials == 0 || cfg.radii.is_empty() {
        return Err(Error::InvalidArgument("r sweep needs trials and radii".into()));
    }
    if let Some(&r) = cfg.radii.iter().find(|&&r| r == 0 || 2 * r > cfg.size) {
        return Err(Error::InvalidArgument(format!(
            "radius {r} must be in 1..={} for a {} pixel side",
            cfg.size / 2,
            cfg.size
        )));
    }
    let mask = make_mask(&MaskSpec::square(cfg.mask, cfg.size))?;
    let k = mask.num_regions();
    let slices = cfg.slices.resolve(cfg.palette_size);
    let images: Vec<DiscreteImage> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            gen_block_texture(&mask, cfg.palette_size, cfg.block, cfg.copy_prob, cfg.seed0 + t as u64)
                .map(|(img, _)| img)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &r in &cfg.radii {
        let scores: Vec<(f64, f64)> = images
            .par_iter()
            .map(|img| {
                let (models, seg, _, _) =
                    estimate_and_segment(img, k, r, slices, cfg.beta_mode, cfg.lambda, true)?;
                let (db, _, jac) = score(img, &mask, &models, seg.as_ref())?;
                Ok((db, jac.expect("segmentation ran")))
            })
            .collect::<Result<_>>()?;
        let db: Vec<f64> = scores.iter().map(|s| s.0).collect();
        let jac: Vec<f64> = scores.iter().map(|s| s.1).collect();
        let (jac_mean, jac_std) = mean_std(&jac);
        rows.push(RSweepRow {
            mask: cfg.mask,
            block: cfg.block,
            copy_prob: cfg.copy_prob,
            palette_size: cfg.palette_size,
            size: cfg.size,
            r,
            slices,
            lambda: cfg.lambda,
            trials: cfg.trials,
            db_theta_mean: mean_std(&db).0,
            jac_mean,
            jac_std,
        });
    }
    Ok(rows)
}

/// Named experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Every mask under both processes at the reference settings.
    Table1,
    /// Estimation quality and time against the number of slices.
    Slices,
    /// Segmentation quality against the GMM spread.
    Noise,
    /// Estimation quality and time against image side and palette size.
    Sizecolors,
    /// Segmentation quality against the moment radius on correlated images.
    Rsweep,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Table1, Preset::Slices, Preset::Noise, Preset::Sizecolors, Preset::Rsweep];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Slices => "slices",
            Preset::Noise => "noise",
            Preset::Sizecolors => "sizecolors",
            Preset::Rsweep => "rsweep",
        }
    }

    /// Grid for the non-radius presets. `full` restores the larger published
    /// trial counts and ranges.
    pub fn grid(self, trials: Option<usize>, seed0: u64, full: bool) -> Option<ExperimentGrid> {
        let trials = trials.unwrap_or(if full { FULL_TRIALS } else { DEFAULT_TRIALS });
        let base = ExperimentGrid {
            masks: MaskKind::ALL.to_vec(),
            processes: vec![Process::Gmm { sigma: 30.0 }, Process::Rand],
            sizes: vec![300],
            palette_sizes: vec![256],
            slices: vec![SliceCount::ThirdOfPalette],
            radii: vec![1],
            lambda: 1.0,
            beta_mode: BetaMode::Ring,
            trials,
            seed0,
            segment: true,
            parallel: true,
        };
        match self {
            Preset::Table1 => Some(base),
            Preset::Slices => Some(ExperimentGrid {
                masks: vec![MaskKind::FiveRegion],
                processes: vec![Process::Gmm { sigma: 30.0 }],
                slices: [8, 16, 32, 64, 86, 128, 160, 192, 256].map(SliceCount::Fixed).to_vec(),
                segment: false,
                parallel: false,
                ..base
            }),
            Preset::Noise => Some(ExperimentGrid {
                processes: [5.0, 10.0, 15.0, 30.0, 45.0, 60.0, 90.0, 120.0]
                    .map(|sigma| Process::Gmm { sigma })
                    .to_vec(),
                ..base
            }),
            Preset::Sizecolors => Some(ExperimentGrid {
                masks: vec![MaskKind::FiveRegion],
                processes: vec![Process::Gmm { sigma: 30.0 }],
                sizes: if full {
                    vec![50, 100, 200, 300, 400, 500]
                } else {
                    vec![50, 100, 200, 300]
                },
                palette_sizes: if full {
                    vec![100, 200, 400, 600, 800, 1000, 1200]
                } else {
                    vec![64, 128, 256, 400]
                },
                segment: false,
                parallel: false,
                ..base
            }),
            Preset::Rsweep => None,
        }
    }

    /// Correlated and IID radius sweeps.
    pub fn r_sweeps(trials: Option<usize>, seed0: u64, full: bool) -> Vec<RSweepConfig> {
        let trials = trials.unwrap_or(if full { FULL_TRIALS } else { DEFAULT_TRIALS });
        [0.8, 0.0]
            .into_iter()
            .map(|copy_prob| RSweepConfig {
                mask: MaskKind::TwoRegion,
                size: 200,
                palette_size: 32,
                block: 6,
                copy_prob,
                radii: vec![1, 3, 8, 13, 18],
                slices: SliceCount::ThirdOfPalette,
                lambda: 1.0,
                beta_mode: BetaMode::Axis,
                trials,
                seed0,
            })
            .collect()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset {s:?}")))
    }
}

/// Exact configuration of a bench run, written next to its CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub preset: Preset,
    pub version: String,
    pub full: bool,
    pub timings: bool,
    pub csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<ExperimentGrid>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub r_sweeps: Vec<RSweepConfig>,
}

/// Runs a preset into `out_dir`, writing `<preset>.csv` and
/// `<preset>.manifest.json`. Returns the CSV path.
pub fn run_preset(
    preset: Preset,
    trials: Option<usize>,
    seed0: u64,
    full: bool,
    timings: bool,
    out_dir: &Path,
) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join(format!("{preset}.csv"));
    let mut manifest = Manifest {
        preset,
        version: env!("CARGO_PKG_VERSION").to_string(),
        full,
        timings,
        csv: format!("{preset}.csv"),
        grid: None,
        r_sweeps: Vec::new(),
    };
    match preset.grid(trials, seed0, full) {
        Some(grid) => {
            manifest.grid = Some(grid.clone());
            write_manifest(out_dir, &manifest)?;
            run_grid(&grid, Some(&csv_path), timings)?;
        }
        None => {
            manifest.r_sweeps = Preset::r_sweeps(trials, seed0, full);
            write_manifest(out_dir, &manifest)?;
            let mut sink = CsvSink::create(&csv_path)?;
            for cfg in &manifest.r_sweeps {
                for row in r_sweep(cfg)? {
                    sink.write(&row)?;
                }
            }
        }
    }
    Ok(csv_path)
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = out_dir.join(format!("{}.manifest.json", manifest.preset));
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    let mut f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
}

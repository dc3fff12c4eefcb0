use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use teamseg::bench::{run_preset, Preset};
use teamseg::graphcut::{segment_with_models, EnergyParams, DEFAULT_MAX_CYCLES};
use teamseg::imgio::{
    load_anymap, load_label_map, read_model_set, save_discrete, save_label_map, write_gamma_slices, write_json,
    write_model_set, write_segmentation,
};
use teamseg::metrics::evaluate;
use teamseg::moments::{estimate_moments, BetaMode};
use teamseg::quantize::quantize_colors;
use teamseg::synth::{generate, make_mask, models_from_gt, GenConfig, MaskKind, MaskSpec, Process};
use teamseg::team::team_estimate;

#[derive(Parser)]
#[command(name = "teamseg", version, about = "Appearance models from co-occurrence moments, and graph-cut segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcessArg {
    Gmm,
    Rand,
}

#[derive(clap::Args)]
struct MomentArgs {
    /// L1 distance between co-occurring pixels.
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Number of third-order slices to keep (default: ceil(L / 3)).
    #[arg(long)]
    slices: Option<usize>,
    /// Pair offsets: every offset at distance r, or only the two axis offsets.
    #[arg(long, default_value_t = BetaMode::Ring)]
    beta_mode: BetaMode,
}

impl MomentArgs {
    fn slices_for(&self, palette_size: usize) -> usize {
        self.slices.unwrap_or(palette_size.div_ceil(3))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reduce an RGB pixmap to a palette-indexed graymap.
    Quantize {
        #[arg(long)]
        colors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        input: PathBuf,
        output: PathBuf,
        palette: PathBuf,
    },
    /// Write the first, second and third-order moments of an image.
    EstimateMoments {
        #[command(flatten)]
        moments: MomentArgs,
        /// Also write the raw slice counts in binary form.
        #[arg(long)]
        gamma_out: Option<PathBuf>,
        input: PathBuf,
        output: PathBuf,
    },
    /// Estimate K appearance models and region proportions.
    Estimate {
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        moments: MomentArgs,
        input: PathBuf,
        models: PathBuf,
    },
    /// Estimate models, then segment with graph cuts.
    Segment {
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        moments: MomentArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_CYCLES)]
        max_cycles: usize,
        input: PathBuf,
        labels: PathBuf,
        models: PathBuf,
    },
    /// Generate a synthetic image and its ground-truth mask.
    Synth {
        #[arg(long, value_parser = parse_mask)]
        mask: MaskKind,
        #[arg(long, value_enum)]
        process: ProcessArg,
        #[arg(long, default_value_t = 30.0)]
        sigma: f64,
        #[arg(long = "L", default_value_t = 256)]
        palette_size: usize,
        #[arg(long, default_value_t = 300)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        output: PathBuf,
        gt: PathBuf,
    },
    /// Score estimated models and labels against a ground-truth mask.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        gt_image: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        report: PathBuf,
    },
    /// Run a preset experiment grid.
    Bench {
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Published trial counts and ranges.
        #[arg(long)]
        full: bool,
        /// Leave wall-time columns empty so reruns are byte-identical.
        #[arg(long)]
        no_timings: bool,
    },
}

fn parse_mask(s: &str) -> std::result::Result<MaskKind, String> {
    s.parse().map_err(|e: teamseg::Error| e.to_string())
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: teamseg::Error| e.to_string())
}

fn load_gray(path: &Path) -> Result<teamseg::DiscreteImage> {
    let img = load_anymap(path)
        .and_then(|a| a.into_gray())
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(img)
}

#[derive(Serialize)]
struct MomentsFile<'a> {
    r: usize,
    beta_mode: BetaMode,
    #[serde(rename = "L")]
    palette_size: usize,
    alpha: &'a [f64],
    beta: Vec<Vec<f64>>,
    slice_colors: &'a [u32],
}

/// `labels.pgm` gets the sidecar `labels.seg.json`.
fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("seg.json")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Quantize {
            colors,
            seed,
            input,
            output,
            palette,
        } => {
            let img = load_anymap(&input)?.into_rgb()?;
            let (q, pal) = quantize_colors(&img, colors, seed)?;
            save_discrete(&q, &output)?;
            write_json(&pal, &palette)?;
        }
        Command::EstimateMoments {
            moments,
            gamma_out,
            input,
            output,
        } => {
            let img = load_gray(&input)?;
            let m = estimate_moments(&img, moments.r, moments.slices_for(img.palette_size()), moments.beta_mode)?;
            let beta = m.beta.row_iter().map(|row| row.iter().copied().collect()).collect();
            let file = MomentsFile {
                r: m.r,
                beta_mode: m.beta_mode,
                palette_size: m.palette_size(),
                alpha: &m.alpha,
                beta,
                slice_colors: m.gamma.colors(),
            };
            write_json(&file, &output)?;
            if let Some(path) = gamma_out {
                write_gamma_slices(&m.gamma, &path)?;
            }
        }
        Command::Estimate {
            k,
            moments,
            input,
            models,
        } => {
            let img = load_gray(&input)?;
            let m = estimate_moments(&img, moments.r, moments.slices_for(img.palette_size()), moments.beta_mode)?;
            write_model_set(&team_estimate(&m, k)?, &models)?;
        }
        Command::Segment {
            k,
            moments,
            lambda,
            max_cycles,
            input,
            labels,
            models,
        } => {
            let img = load_gray(&input)?;
            let m = estimate_moments(&img, moments.r, moments.slices_for(img.palette_size()), moments.beta_mode)?;
            let est = team_estimate(&m, k)?;
            let params = EnergyParams {
                lambda,
                ..EnergyParams::default()
            };
            let seg = segment_with_models(&img, &est, &params, max_cycles)?;
            save_label_map(&seg, &labels)?;
            write_segmentation(&seg, sidecar(&labels))?;
            write_model_set(&est, &models)?;
        }
        Command::Synth {
            mask,
            process,
            sigma,
            palette_size,
            size,
            seed,
            output,
            gt,
        } => {
            let process = match process {
                ProcessArg::Gmm => Process::Gmm { sigma },
                ProcessArg::Rand => Process::Rand,
            };
            let m = make_mask(&MaskSpec::square(mask, size))?;
            let img = generate(
                &m,
                &GenConfig {
                    process,
                    palette_size,
                    seed,
                },
            )?;
            save_discrete(&img, &output)?;
            save_label_map(&m, &gt)?;
        }
        Command::Eval {
            gt,
            gt_image,
            models,
            labels,
            report,
        } => {
            let est = read_model_set(&models)?;
            let k = est.num_regions();
            let mask = load_label_map(&gt, k).with_context(|| format!("reading {}", gt.display()))?;
            let img = load_gray(&gt_image)?;
            if img.palette_size() != est.palette_size() {
                bail!(
                    "image has {} colors but the models have {}",
                    img.palette_size(),
                    est.palette_size()
                );
            }
            let reference = models_from_gt(&img, &mask)?;
            let seg = labels.map(|p| load_label_map(&p, k)).transpose()?;
            let r = evaluate(&reference, Some(&est), &mask, seg.as_ref())?;
            write_json(&r, &report)?;
        }
        Command::Bench {
            preset,
            trials,
            seed,
            out,
            full,
            no_timings,
        } => {
            let csv = run_preset(preset, trials, seed, full, !no_timings, &out)?;
            println!("{}", csv.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}

//! `qig`: degrade images, train micro-models, sweep precision over JPEG
//! quality and attribute the loss change with integrated gradients.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qig::codec::QualityLevel;
use qig::harness::Metric;
use qig::ig::Scheme;
use qig::viz::Polarity;

use config::{OverlayMode, RecipeOverrides, UsageError};

#[derive(Debug, Parser)]
#[command(
    name = "qig",
    version,
    about = "Attribute quality-induced loss changes with integrated gradients"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file. Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: qig-out]
    #[arg(long, short, global = true, env = "QIG_OUTPUT_DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for per-image work [default: all cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for synthetic data and training [default: 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// JPEG-degrade one image at each quality and report PSNR.
    Degrade(DegradeArgs),
    /// Train a micro-model and save a checkpoint.
    Train(TrainArgs),
    /// Score a model at each quality level and emit tables and a chart.
    Sweep(SweepArgs),
    /// Integrated-gradients attribution from the original to each degraded image.
    Attribute(AttributeArgs),
    /// Render overlays from a stored attribution map.
    Overlay(OverlayArgs),
    /// Run the property suite and print one line per check.
    Verify(VerifyArgs),
    /// Re-render tables and the chart from a stored precision.csv.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Checkpoint JSON written by `train`.
    #[arg(long, conflicts_with_all = ["provider", "train_fresh"])]
    pub checkpoint: Option<PathBuf>,
    /// Provider command line, split like a shell would.
    #[arg(long, conflicts_with = "train_fresh")]
    pub provider: Option<String>,
    /// Train a micro-model on the synthetic recipe first [default source].
    #[arg(long)]
    pub train_fresh: bool,
    /// Seconds to wait for each provider reply.
    #[arg(long, requires = "provider")]
    pub provider_timeout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RecipeArgs {
    /// Synthetic classes.
    #[arg(long)]
    pub classes: Option<usize>,
    /// Synthetic training images per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Synthetic held-out images per class.
    #[arg(long)]
    pub eval_per_class: Option<usize>,
    /// Synthetic image side in pixels.
    #[arg(long)]
    pub side: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
}

impl RecipeArgs {
    pub fn overrides(&self) -> RecipeOverrides {
        RecipeOverrides {
            classes: self.classes,
            per_class: self.per_class,
            eval_per_class: self.eval_per_class,
            side: self.side,
            hidden: self.hidden.clone(),
            embed_dim: self.embed_dim,
            temperature: self.temperature,
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
        }
    }
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Input image (.ppm, or .png when built with the png feature).
    pub input: PathBuf,
    /// Comma-separated list such as `original,75,50,25`.
    #[arg(long, value_delimiter = ',')]
    pub qualities: Option<Vec<QualityLevel>>,
    /// Resize the result to HxW with bicubic resampling.
    #[arg(long, value_name = "HxW")]
    pub size: Option<String>,
    /// Chroma is subsampled 4:2:0 below this quality.
    #[arg(long)]
    pub subsample_below: Option<u8>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory with labels.csv. Synthetic data when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub recipe: RecipeArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Row label in the tables.
    #[arg(long)]
    pub model_name: Option<String>,
    /// Dataset directory with labels.csv. Synthetic held-out data when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub qualities: Option<Vec<QualityLevel>>,
    /// macro_precision or accuracy.
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub subsample_below: Option<u8>,
    #[command(flatten)]
    pub recipe: RecipeArgs,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset directory with labels.csv. Synthetic held-out data when absent.
    #[arg(long, conflicts_with = "image")]
    pub data: Option<PathBuf>,
    /// Attribute a single image instead of a dataset.
    #[arg(long, requires = "label")]
    pub image: Option<PathBuf>,
    /// True class of `--image`, by name or index.
    #[arg(long, requires = "image")]
    pub label: Option<String>,
    /// Only the first N items.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub qualities: Option<Vec<QualityLevel>>,
    /// Integration steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// trapezoid or riemann_right.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Which qualities get overlay images.
    #[arg(long, value_enum)]
    pub overlays: Option<OverlayMode>,
    #[arg(long)]
    pub image_weight: Option<f64>,
    #[arg(long)]
    pub ig_weight: Option<f64>,
    /// Also store each attribution map as JSON for `overlay`.
    #[arg(long)]
    pub save_maps: bool,
    #[arg(long)]
    pub subsample_below: Option<u8>,
    #[command(flatten)]
    pub recipe: RecipeArgs,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Image to draw on.
    #[arg(long)]
    pub image: PathBuf,
    /// Attribution map JSON written by `attribute --save-maps`.
    #[arg(long)]
    pub map: PathBuf,
    /// negative, positive or both. All three when absent.
    #[arg(long)]
    pub polarity: Option<Polarity>,
    #[arg(long)]
    pub image_weight: Option<f64>,
    #[arg(long)]
    pub ig_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Mock provider executable [default: next to this binary]
    #[arg(long)]
    pub mock: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Precision CSV written by `sweep` [default: OUT/precision.csv]
    #[arg(long)]
    pub precision: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

//! `coopnet` command-line tool.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use coopnet::Error;

#[derive(Parser, Debug)]
#[command(name = "coopnet", version, about = "Train and use a cooperative initializer/solver pair")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel kernels.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output directory (default: config `out`, else `./out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Floating-point width for training.
    #[arg(long, global = true, value_parser = ["32", "64"])]
    pub precision: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train from a config; writes checkpoints and stats.jsonl.
    Train {
        /// Continue from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Draw initializer or solver samples.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Samples per condition.
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Stage::Solver)]
        stage: Stage,
        /// Condition image (image-conditioned models); repeat for several.
        #[arg(long = "condition")]
        conditions: Vec<PathBuf>,
    },
    /// Infer latent vectors (and optionally classes) for targets.
    #[command(group(ArgGroup::new("class").required(true).args(["known_class", "infer_class"])))]
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV of target vectors, or an image.
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        known_class: Option<usize>,
        #[arg(long)]
        infer_class: bool,
    },
    /// Fill the masked region of an image.
    Inpaint {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Observed image.
        #[arg(long)]
        image: PathBuf,
        /// Mask image, nonzero inside the hole (default: config `mask`).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Ground truth for hole-region PSNR and SSIM.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compute an evaluation metric.
    Eval(EvalArgs),
    /// Run the exact finite-state simulator and write its trace.
    FixedPoint,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Model to draw Parzen reference samples from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Parzen reference samples (CSV) instead of model samples.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Parzen test samples (CSV); default is the config's held-out toy data.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Parzen bandwidth selection set (CSV).
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Fixed Parzen bandwidth, skipping selection.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Model samples for the Parzen reference.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Stage::Solver)]
    pub stage: Stage,
    /// First image (psnr, ssim).
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second image (psnr, ssim).
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Region mask image for psnr.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// PSNR peak on the [-1, 1] scale (2 corresponds to 255 on 8 bits).
    #[arg(long, default_value_t = 2.0)]
    pub peak: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initializer,
    Solver,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Parzen,
    Psnr,
    Ssim,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Unsupported(_) | Error::Shape(_) | Error::UnboundInput(_) | Error::UnknownNode(_) => 2,
        Error::Divergence(_) | Error::NonFinite(_) => 3,
        Error::Io { .. } | Error::Image { .. } | Error::Checkpoint(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `focaldepth` command-line front-end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use focaldepth::Error;

/// Version tag written into every report.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser, Serialize)]
#[command(name = "focaldepth", version, about = "Focal-length-aware depth toolkit")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-sample stages; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log filter, e.g. `info`, `debug`, `focaldepth=trace`.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Augment a dataset with the focal-change / depth-rescale mix.
    Augment(AugmentArgs),
    /// Evaluate predicted depth against ground truth.
    Eval(EvalArgs),
    /// Backproject samples to PLY point clouds.
    Reconstruct(ReconstructArgs),
    /// Train the toy focal-conditioned depth model.
    ToyTrain(ToyTrainArgs),
    /// Predict depth for a manifest with a trained checkpoint.
    Predict(PredictArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render a synthetic textured-plane dataset.
    Synth(SynthArgs),
    /// Run the with/without focal generalization experiment.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Focal-change to depth-rescale ratio.
    #[arg(long, default_value = "0.6:0.4")]
    pub ratio: String,
    #[arg(long, default_value_t = 0.7)]
    pub k_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k_max: f64,
    /// Also copy the unaugmented samples to the output.
    #[arg(long)]
    pub keep_originals: bool,
    /// Bilinear color resampling instead of nearest.
    #[arg(long)]
    pub bilinear_color: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_manifest: PathBuf,
    #[arg(long)]
    pub gt_manifest: PathBuf,
    /// Ground-truth depth range `d_min:d_max` in meters.
    #[arg(long, default_value = "0.001:10")]
    pub cap: String,
    /// Unweighted mean of per-image metrics.
    #[arg(long, conflicts_with = "pooled")]
    pub per_image: bool,
    /// Pixel-pooled metrics (default).
    #[arg(long)]
    pub pooled: bool,
    /// Directory for `eval_report.json` and `eval_report.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Backproject with this fx; fy is scaled by the same factor.
    #[arg(long, conflicts_with = "uncorrected")]
    pub override_fx: Option<f64>,
    /// Undo the focal correction of focal-changed samples (fx * k).
    #[arg(long)]
    pub uncorrected: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Raw,
    ImageWidth,
}

#[derive(Debug, Args, Serialize)]
pub struct ToyTrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Evaluate on this manifest instead of the training set.
    #[arg(long)]
    pub eval_manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.6e-4)]
    pub base_lr: f64,
    #[arg(long, default_value_t = 0.02)]
    pub backbone_ratio: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = Normalization::Raw)]
    pub focal_normalization: Normalization,
    /// Train without focal features (M fixed at zero).
    #[arg(long, conflicts_with = "with_focal")]
    pub ablate_focal: bool,
    /// Train with focal features (default).
    #[arg(long)]
    pub with_focal: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long, default_value_t = 48)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64.0)]
    pub focal: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of training seeds starting at `--seed`.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long)]
    pub train_scenes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// An error with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteLoss { .. } => CliError::numerical(e.to_string()),
            Error::Argument { .. } => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    log::info!(
        "resolved config: {}",
        serde_json::to_string(&cli).unwrap_or_else(|e| format!("<unserializable: {e}>"))
    );
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

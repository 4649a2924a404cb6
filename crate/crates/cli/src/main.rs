//! `gcosod`: batch driver for synthetic data, group building, GCT sampling,
//! baseline prediction, evaluation and uncertainty revision.
//!
//! Every subcommand writes into `<out>/<command>-<hash>` where the hash covers
//! the fully resolved configuration, so identical invocations land in (and
//! deterministically overwrite) the same directory.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "gcosod", version, about = "Generalised co-salient object detection benchmark toolkit")]
struct Cli {
    /// Worker threads (0 = one per core). Never changes output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic shapes dataset with exact masks and tags.
    Synth(SynthArgs),
    /// Build Common (controlled primary ratio) or Zero (no co-salient object) groups.
    Build(BuildArgs),
    /// Emit GCT training-group streams, one JSONL file per epoch.
    Sample(SampleArgs),
    /// Run the single-image and co-saliency baselines over a manifest.
    Predict(PredictArgs),
    /// Score a prediction directory: metrics, calibration, reliability diagram.
    Eval(EvalArgs),
    /// Entropy maps, bias-matrix revision and before/after evaluation.
    Uncertainty(UncertaintyArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Parent directory of the run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    categories: usize,
    #[arg(long, default_value_t = 1)]
    groups_per_category: usize,
    #[arg(long, default_value_t = 10)]
    group_size: usize,
    /// Side length of the square images, in pixels.
    #[arg(long, default_value_t = 96)]
    image_size: u32,
    #[arg(long, default_value_t = 0)]
    min_distractors: usize,
    #[arg(long, default_value_t = 1)]
    max_distractors: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuildMode {
    Common,
    Zero,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Source manifest (sorted groups with tags).
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = BuildMode::Common)]
    mode: BuildMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Common mode: primary-ratio ranges, one group variant per range.
    #[arg(long, default_value = "[0.2,0.4),[0.4,0.6),[0.6,0.8]")]
    ratio_ranges: String,
    /// Common mode: variants per source group.
    #[arg(long, default_value_t = 3)]
    variants: usize,
    /// Categories never used as fillers (common) or tags allowed to repeat (zero).
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
    /// Zero mode: number of groups.
    #[arg(long, default_value_t = 55)]
    num_groups: usize,
    /// Zero mode: smallest group.
    #[arg(long, default_value_t = 5)]
    min_group_size: usize,
    /// Zero mode: largest group.
    #[arg(long, default_value_t = 6)]
    max_group_size: usize,
    /// Zero mode: a tag in at least max(2, ceil(threshold * size)) images is a violation.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SampleMode {
    /// r = floor(N * u), u ~ U[0, 1).
    FloorUniform,
    /// r ~ U{0, ..., N}.
    IntegerUniform,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    epochs: u64,
    #[arg(long, value_enum, default_value_t = SampleMode::FloorUniform)]
    mode: SampleMode,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Consensus mass below which an image abstains.
    #[arg(long, default_value_t = 0.25)]
    threshold: f64,
    #[arg(long, default_value_t = 1)]
    smoothing_radius: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SModeArg {
    /// Empty ground truth scores 0.
    Strict,
    /// Empty ground truth scores 1 - mean(p).
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EModeArg {
    XiMean,
    Enhanced,
}

#[derive(Debug, Args)]
struct MetricArgs {
    /// Binarization threshold for IoU.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, value_enum, default_value_t = SModeArg::Strict)]
    s_mode: SModeArg,
    #[arg(long, value_enum, default_value_t = EModeArg::Enhanced)]
    e_mode: EModeArg,
    /// Thresholds in the max-F / max-E sweeps.
    #[arg(long, default_value_t = 256)]
    sweep: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<group_id>/<image_id>.png` probability maps.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Confidence bins for ECE and the reliability diagram.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Use every n-th pixel for calibration.
    #[arg(long, default_value_t = 1)]
    stride: usize,
}

#[derive(Debug, Args)]
struct UncertaintyArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Offset inside the logarithm.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Keep negative uncertainties instead of clamping them to 0.
    #[arg(long)]
    no_clamp: bool,
    /// Use the two-term binary entropy.
    #[arg(long)]
    full_binary_entropy: bool,
    #[command(flatten)]
    metrics: MetricArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(run::exit_code(&e))
        }
    }
}

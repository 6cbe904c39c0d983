use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stcast::Precision;

#[derive(Debug, Parser)]
#[command(name = "stcast", version, about = "Spatiotemporal sequence-to-sequence forecasting on gridded data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic GSEQ series.
    MakeSynth(MakeSynthArgs),
    /// Convert a headerless float dump to GSEQ, or back with --export.
    Convert(ConvertArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint: metrics, per-step curves and heatmaps.
    Eval(EvalArgs),
    /// Train several architectures under one schedule and compare them.
    Ablate(AblateArgs),
    /// Run randomized leakage probes; fails on any leak.
    ProbeCausality(ProbeArgs),
    /// Compare analytic gradients with central differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single-threaded kernels and timing-free reports for bitwise replay.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, value_parser = parse_precision)]
    pub precision: Option<Precision>,
    /// Output directory; must be empty or absent.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse()
}

/// Model flags; each overrides the same key from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Flat `key = value` file with model, data and schedule keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Causal strategy under the no-causal ablation (causal or reversed).
    #[arg(long)]
    pub ablation_base: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Temporal kernel extent.
    #[arg(long)]
    pub kt: Option<usize>,
    /// Spatial kernel extent (odd).
    #[arg(long)]
    pub kd: Option<usize>,
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub t_in: Option<usize>,
    #[arg(long)]
    pub t_out: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Keep F filters in every layer.
    #[arg(long)]
    pub no_filter_growth: bool,
    #[arg(long)]
    pub bn_momentum: Option<f64>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// GSEQ series.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub stride: Option<usize>,
    /// none or zscore.
    #[arg(long)]
    pub normalize: Option<String>,
    /// Train/validation/test ratios, e.g. 0.6,0.2,0.2.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// per-element (default) or per-sample error normalization.
    #[arg(long)]
    pub metric: Option<String>,
    /// Keep only the first N training windows.
    #[arg(long)]
    pub max_train: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MakeSynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// advecting-blobs, traveling-wave or noise-floor.
    #[arg(long, default_value = "advecting-blobs")]
    pub kind: String,
    #[arg(long, default_value_t = 2000)]
    pub frames: usize,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Cells per frame along H and W, e.g. 0,1.
    #[arg(long, allow_hyphen_values = true)]
    pub velocity: Option<String>,
    #[arg(long)]
    pub blobs: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Blob lifetime range in frames, e.g. 80,160.
    #[arg(long)]
    pub lifetime: Option<String>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Wave periods across H and W, e.g. 1,2.
    #[arg(long)]
    pub wavenumber: Option<String>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// File name inside --out; defaults to <kind>.gseq.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    /// Write the GSEQ input as a raw dump instead.
    #[arg(long)]
    pub export: bool,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Axis order of the dump, slowest first.
    #[arg(long, default_value = "thwc")]
    pub order: String,
    #[arg(long, default_value = "little")]
    pub byte_order: String,
    #[arg(long, default_value = "f32")]
    pub dtype: String,
    /// Replace NaNs with this value instead of rejecting them.
    #[arg(long, allow_hyphen_values = true)]
    pub fill: Option<f32>,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Run directory written by train; supplies config.kv and model.ckpt.
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub on: String,
    /// Output steps to score; defaults to the model's horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Window (within the chosen split) drawn as heatmaps.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Comma-separated architecture tags; defaults to the seven ablations.
    #[arg(long)]
    pub tags: Option<String>,
    /// Train variants concurrently, each in its own directory.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    pub models: usize,
    #[arg(long, default_value_t = 20)]
    pub positions: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameters sampled in the end-to-end check.
    #[arg(long, default_value_t = 10)]
    pub params: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
}

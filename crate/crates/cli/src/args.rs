use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "edgefall",
    version,
    about = "Train, distil, ablate and select LSTM fall detectors for wrist sensors",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 data error, \
                  4 numerical failure (non-finite loss), 5 replay mismatch, 1 other.\n\
                  Set EDGEFALL_THREADS to cap the number of worker threads."
)]
pub struct Cli {
    /// Key-value configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for synthetic data, splitting and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory that receives every output file and the run manifest.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Window and label a directory of per-trial CSV recordings.
    Ingest(IngestArgs),
    /// Generate a synthetic windowed dataset.
    Synth(SynthArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Distil a sensor-restricted student from a trained teacher.
    Distill(DistillArgs),
    /// Train one model per sensor subset and report their accuracies.
    Ablate(AblateArgs),
    /// Compare big, small and distilled models per sensor subset.
    Compare(CompareArgs),
    /// Pick the lowest-power configuration that meets an accuracy floor.
    Select(SelectArgs),
    /// Measure single-window forward latency.
    Bench(BenchArgs),
    /// Score one window stored as CSV.
    Infer(InferArgs),
    /// Re-run the command recorded in a manifest and compare its outputs.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Distill(_) => "distill",
            Command::Ablate(_) => "ablate",
            Command::Compare(_) => "compare",
            Command::Select(_) => "select",
            Command::Bench(_) => "bench",
            Command::Infer(_) => "infer",
            Command::Replay(_) => "replay",
        }
    }
}

/// Where windows come from: generated on the fly or read from disk.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Use the synthetic generator instead of recorded data.
    #[arg(long)]
    pub synth: bool,
    /// A directory of CSV recordings or a dataset JSON written by `ingest`/`synth`.
    #[arg(long, value_name = "PATH", conflicts_with = "synth")]
    pub data: Option<PathBuf>,
    /// Synthetic windows per class.
    #[arg(long)]
    pub n_per_class: Option<usize>,
    /// Standard deviation of the synthetic noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Window length in samples.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long)]
    pub lstm_units: Option<usize>,
    #[arg(long)]
    pub hidden_units: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct KdArgs {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub width_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Directory of CSV recordings.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Comma-separated activity codes (ranges allowed) labelled as falls.
    #[arg(long)]
    pub fall_codes: Option<String>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Sensor subset to train on, e.g. `AB`. Defaults to every sensor in the data.
    #[arg(long)]
    pub sensors: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DistillArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Teacher model JSON.
    #[arg(long, value_name = "PATH")]
    pub teacher: PathBuf,
    /// Student sensor subset, e.g. `A`.
    #[arg(long)]
    pub sensors: String,
    #[command(flatten)]
    pub kd: KdArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated subsets such as `A,AB`; all seven by default.
    #[arg(long)]
    pub subsets: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated subsets; all seven by default.
    #[arg(long)]
    pub subsets: Option<String>,
    /// Reuse a trained full-sensor teacher instead of training one.
    #[arg(long, value_name = "PATH")]
    pub teacher: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub kd: KdArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    /// Minimum accuracy, as a fraction.
    #[arg(long)]
    pub floor: Option<f64>,
    /// JSON list of prepared candidates (`sensor_set`, `topology`,
    /// `window_len`, `accuracy`); power is computed from the configuration.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["teacher", "synth", "data"])]
    pub candidates: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Full-sensor teacher; trained first when absent.
    #[arg(long, value_name = "PATH")]
    pub teacher: Option<PathBuf>,
    /// Comma-separated subsets; all seven by default.
    #[arg(long)]
    pub subsets: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub kd: KdArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BenchArgs {
    /// Model JSON to time; a freshly initialised model otherwise.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Window length in samples.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Sensors of the fresh model.
    #[arg(long, default_value = "A")]
    pub sensors: String,
    #[arg(long, default_value_t = 256)]
    pub lstm_units: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_units: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// CSV with one column per channel (`ax`..`p`) and one row per time step.
    #[arg(long, value_name = "PATH")]
    pub window: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}

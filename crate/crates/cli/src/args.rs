use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sisvae::{Criterion, Regularizer};

/// Smoothness-inducing sequential VAE for time-series anomaly detection.
///
/// Exit codes: 0 ok, 2 bad flags or config, 3 I/O or malformed input,
/// 4 non-finite numbers, 5 model/data dimension mismatch, 6 invalid eval input.
#[derive(Debug, Parser)]
#[command(name = "sisvae", version)]
pub struct Cli {
    /// key=value file; explicit flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic dataset with anomaly labels.
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Train a model on a data CSV.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score every position of a data CSV with a trained model.
    #[command(args_override_self = true)]
    Score(ScoreArgs),
    /// Metrics and curves from a score CSV and a label CSV.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Scaled-down sweeps: lambda sensitivity, anomaly proportion, convergence.
    #[command(args_override_self = true)]
    Report(ReportArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Correlated,
    Mackey,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    pub preset: Preset,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// File stem; defaults to the preset name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100, help_heading = "Correlated")]
    pub m: usize,
    #[arg(long, default_value_t = 200, help_heading = "Correlated")]
    pub t: usize,
    #[arg(long, default_value_t = 0.02, help_heading = "Correlated")]
    pub anomaly_prob: f64,
    #[arg(long, default_value_t = 10.0, help_heading = "Correlated")]
    pub lengthscale: f64,
    #[arg(long, default_value_t = 0.1, help_heading = "Correlated")]
    pub noise_base: f64,
    #[arg(long, default_value_t = 5000, help_heading = "Mackey")]
    pub n: usize,
    #[arg(long, default_value_t = 17, help_heading = "Mackey")]
    pub tau: usize,
    #[arg(long, default_value_t = 1.2, help_heading = "Mackey")]
    pub x0: f64,
    #[arg(long, default_value_t = 0.003, help_heading = "Mackey")]
    pub point_rate: f64,
    #[arg(long, default_value_t = 2, help_heading = "Mackey")]
    pub subseq_count: usize,
    #[arg(long, default_value_t = 10, help_heading = "Mackey")]
    pub subseq_len_min: usize,
    #[arg(long, default_value_t = 28, help_heading = "Mackey")]
    pub subseq_len_max: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 200)]
    pub h_dim: usize,
    #[arg(long, default_value_t = 40)]
    pub z_dim: usize,
    /// Feature extractor width; defaults to --h-dim.
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub sigma_floor: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    pub data: PathBuf,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to `<out stem>.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Continue from a checkpoint and its optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    /// Window step; defaults to --window.
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = Regularizer::Kl)]
    pub regularizer: Regularizer,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the data as is instead of z-scoring each series.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
    #[arg(long, default_value_t = Criterion::Prob)]
    pub criterion: Criterion,
    /// Monte-Carlo passes for the prob criterion.
    #[arg(long = "L", visible_alias = "passes", default_value_t = 128)]
    pub passes: usize,
    #[arg(long, default_value_t = 120)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `<out stem>.detections.csv` flagging score > alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    pub scores: PathBuf,
    pub labels: PathBuf,
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
    /// precision@K cutoffs; values above the number of scored positions are skipped.
    #[arg(long = "k", value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "10,50,200")]
    pub ks: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    LambdaSweep,
    AnomalyProportion,
    Convergence,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    pub kind: ReportKind,
    /// Defaults to `<kind>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 20)]
    pub m: usize,
    #[arg(long, default_value_t = 400)]
    pub t: usize,
    /// Anomaly rate for lambda-sweep and convergence.
    #[arg(long, default_value_t = 0.05)]
    pub anomaly_prob: f64,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "0,0.1,0.5,1,2")]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, num_args = 1, default_value = "0.01,0.02,0.05,0.1")]
    pub probs: Vec<f64>,
    /// Lambda of the regularized model in anomaly-proportion and convergence.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 32)]
    pub h_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub z_dim: usize,
    #[arg(long, default_value_t = 40)]
    pub window: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long = "L", visible_alias = "passes", default_value_t = 32)]
    pub passes: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

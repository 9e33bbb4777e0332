use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use llmembed_core::classifier::Activation;

#[derive(Debug, Parser)]
#[command(name = "llmembed", version, about = "Fuse frozen text embeddings and train a classifier head")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a separable synthetic train/test bundle.
    Synth(SynthArgs),
    /// Train a classifier head on a fused bundle.
    Train(TrainArgs),
    /// Report accuracy of a checkpoint on a bundle.
    Eval(EvalArgs),
    /// Emit per-row predictions as JSON lines.
    Predict(PredictArgs),
    /// Turn phase timings into energy, bill and token budget tables.
    ReportCost(CostArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "LLMEMBED_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_rows: Option<usize>,
    #[arg(long)]
    pub n_test_rows: Option<usize>,
    #[arg(long)]
    pub n_classes: Option<usize>,
    /// `name:depths:dim`; repeat for several sources. Replaces the default set.
    #[arg(long = "source", value_name = "NAME:DEPTHS:DIM")]
    pub sources: Vec<String>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with any of the above keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Index 1-15 or alias such as `avg+cat` or `cat+co+avg+cat`.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Co-occurrence width; defaults to the `bert` dim when present.
    #[arg(long)]
    pub projection_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single-threaded, fixed-order reductions.
    #[arg(long)]
    pub deterministic: bool,
    /// Evaluate on the test bundle every N epochs.
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Width of an optional hidden layer.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_parser = parse_activation)]
    pub activation: Option<Activation>,
    /// JSON file with any of the above keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Must match the checkpoint's strategy when given.
    #[arg(long)]
    pub strategy: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: EvalArgs,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// `timings.json` from an earlier run; repeatable.
    #[arg(long)]
    pub timings: Vec<PathBuf>,
    /// `name=HH:MM:SS` (or seconds); repeatable.
    #[arg(long = "phase", value_name = "NAME=DURATION", allow_hyphen_values = true)]
    pub phases: Vec<String>,
    /// Declared total energy in kWh, used instead of phase timings.
    #[arg(long, allow_hyphen_values = true)]
    pub kwh: Option<f64>,
    /// Wattage for extraction phases.
    #[arg(long)]
    pub watts_extract: Option<f64>,
    /// Wattage for fuse/train/eval/predict phases.
    #[arg(long)]
    pub watts_train: Option<f64>,
    /// `name=W` for any other phase; repeatable.
    #[arg(long = "watts", value_name = "NAME=W")]
    pub watts: Vec<String>,
    /// Currency per kWh.
    #[arg(long)]
    pub tariff: Option<f64>,
    /// Remote token count to compare against.
    #[arg(long)]
    pub tokens: Option<u64>,
    /// Currency per 1k tokens.
    #[arg(long)]
    pub token_price: Option<f64>,
    #[arg(long, default_value = "llmembed")]
    pub label: String,
    #[arg(long, default_value = "remote")]
    pub remote_label: String,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: llmembed_core::Error| e.to_string())
}

// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nhtd::eval::ReportFormat;
use nhtd::sampler::BatchContext;
use nhtd::{FeatureMode, LayerKind};

#[derive(Debug, Parser)]
#[command(name = "nhtd", version, about = "Node-wise hardware Trojan detection on gate-level netlists")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a Verilog or graph-JSON netlist, label it, write canonical graph JSON.
    Convert(ConvertArgs),
    /// Compute the per-node feature matrix of a netlist.
    Featurize(FeaturizeArgs),
    /// Train a model on one or more labeled netlists.
    Train(TrainArgs),
    /// Classify every node of a netlist with a trained model.
    Detect(DetectArgs),
    /// Leave-one-out evaluation over a set of netlists.
    Eval(EvalArgs),
    /// Leave-one-out grid search over batches, layers and units.
    Gridsearch(GridArgs),
    /// Insert generated Trojans into host netlists.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random draw; falls back to NHTD_SEED, then 0.
    #[arg(long, env = "NHTD_SEED")]
    pub seed: Option<u64>,
    /// Cell library JSON replacing the built-in library.
    #[arg(long, value_name = "FILE")]
    pub lib: Option<PathBuf>,
    /// Run-manifest path; defaults to `<output>.manifest.json`.
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Regex over instance ids selecting Trojan cells (Verilog default: `(?i)trojan`).
    #[arg(long, value_name = "REGEX", conflicts_with = "label_list")]
    pub label_regex: Option<String>,
    /// File listing Trojan instance ids, one per line.
    #[arg(long, value_name = "FILE")]
    pub label_list: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model configuration JSON; individual flags override its fields.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Layer kind.
    #[arg(long, value_name = "gat|mpnn|gin")]
    pub model: Option<LayerKind>,
    /// Message-passing layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden units per layer.
    #[arg(long)]
    pub units: Option<usize>,
    /// Mini-batches per graph and epoch.
    #[arg(long)]
    pub batches: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without loss improvement before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Feature layout.
    #[arg(long, value_name = "netlist46|baseline40")]
    pub mode: Option<FeatureMode>,
    /// Graph each batch's forward pass runs on.
    #[arg(long, value_name = "induced|full")]
    pub batch_context: Option<BatchContext>,
    /// Reuse the first normal-node partition in every epoch.
    #[arg(long)]
    pub fixed_batches: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Feature layout.
    #[arg(long, default_value = "netlist46", value_name = "netlist46|baseline40")]
    pub mode: FeatureMode,
    /// Standardize the numeric columns with statistics fit on this netlist.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Netlist files or directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Checkpoint path.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long, value_name = "FILE")]
    pub loss_log: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub input: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(short, long)]
    pub checkpoint: PathBuf,
    /// Label CSV: `id,prediction,p_trojan`.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Exit with status 2 when F1 against the input's labels is below this.
    #[arg(long, value_name = "F1")]
    pub assert_f1: Option<f64>,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Report path.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value = "csv", value_name = "csv|json|text")]
    pub format: ReportFormat,
    /// Parallel folds; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Exit with status 2 when the average F1 is below this.
    #[arg(long, value_name = "F1")]
    pub assert_f1: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Result JSON: per-cell averages and the selected configuration.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the selected configuration as a `--config` file.
    #[arg(long, value_name = "FILE")]
    pub best_config: Option<PathBuf>,
    /// Cells as `batches:layers:units`, comma separated; default is the 28-cell grid.
    #[arg(long, value_delimiter = ',')]
    pub cells: Vec<String>,
    /// Parallel grid cells; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub labels: LabelArgs,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Host netlist files or directories.
    #[arg(long, num_args = 1.., value_name = "PATH")]
    pub hosts: Vec<PathBuf>,
    /// JSON array of random-host specifications.
    #[arg(long, value_name = "FILE")]
    pub host_spec: Option<PathBuf>,
    /// Number of random hosts with seed-drawn sizes.
    #[arg(long, value_name = "N")]
    pub random_hosts: Option<usize>,
    /// Samples per host.
    #[arg(long, default_value_t = 10)]
    pub per_host: usize,
    /// Rebuild the samples recorded in a dataset manifest.
    #[arg(long, value_name = "FILE", conflicts_with = "per_host")]
    pub from_manifest: Option<PathBuf>,
    /// Parallel samples; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub common: Common,
}

//! `rcx`: generate data, train a graph classifier, train and run explainers,
//! and evaluate explanations.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on runtime
//! failures (I/O, non-finite numerics).

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "rcx", version, about = "Causal-screening and reinforced explainers for graph classifiers")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file of default flag values; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted-motif dataset and split it.
    GenData(GenDataArgs),
    /// Train the target graph classifier.
    TrainTarget(TrainTargetArgs),
    /// Train the reinforced causal explainer policy against a frozen classifier.
    TrainExplainer(TrainExplainerArgs),
    /// Rank the edges of each graph in a split.
    Explain(ExplainArgs),
    /// Score explainers with accuracy, contrastivity, sanity-check and ground-truth metrics.
    Evaluate(EvaluateArgs),
    /// Rank correlation of explanations under the trained and a randomized classifier.
    SanityCheck(SanityCheckArgs),
    /// Write one explained graph as Graphviz DOT.
    ExportDot(ExportDotArgs),
    /// Time explainers per graph and count model forward passes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Greedy,
    Rc,
    Random,
    Occlusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutArg {
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardArg {
    Mi,
    Binary,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutArg {
    Sample,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Acc,
    Auc,
    Cst,
    Sc,
    Gt,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    /// Number of graphs.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Nodes in each random base graph before the motif is attached.
    #[arg(long, default_value_t = 12)]
    pub base_nodes: usize,
    /// Train/valid/test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    pub ratios: Vec<f64>,
    #[arg(long, env = "RCX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainTargetArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Predictor hidden width (default: same as --hidden).
    #[arg(long)]
    pub predictor_hidden: Option<usize>,
    #[arg(long, value_enum, default_value_t = ReadoutArg::Sum)]
    pub readout: ReadoutArg,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    /// Mini-batch size (default: full batch).
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, env = "RCX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Parameter checkpoint (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV (default: `<out>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainExplainerArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Width of the policy encoder and MLPs.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Training rollouts select max(1, ceil(ratio * |E|)) edges.
    #[arg(long, default_value_t = 0.25)]
    pub train_ratio: f64,
    #[arg(long, value_enum, default_value_t = RewardArg::Mi)]
    pub reward: RewardArg,
    #[arg(long, value_enum, default_value_t = RolloutArg::Sample)]
    pub rollout: RolloutArg,
    /// Subtract a moving average of rewards with this momentum (extension; off by default).
    #[arg(long)]
    pub baseline_momentum: Option<f64>,
    #[arg(long, env = "RCX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Policy checkpoint (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV (default: `<out>.log.csv`).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainerSelection {
    #[arg(long, value_enum, default_value_t = Method::Rc)]
    pub method: Method,
    /// Policy checkpoint, required for `--method rc`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Base seed of the random explainer.
    #[arg(long, env = "RCX_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub explainer: ExplainerSelection,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Only explain this graph.
    #[arg(long)]
    pub graph: Option<String>,
    /// Explanation size K (overrides --ratio).
    #[arg(long)]
    pub k: Option<usize>,
    /// Explanation size as a fraction of |E|: K = ceil(ratio * |E|).
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    /// Beam width for `--method rc`; ranks only the K selected edges.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long, value_enum, default_value_t = RewardArg::Mi)]
    pub reward: RewardArg,
    /// Explanations JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Policy checkpoint, required when the methods include `rc`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rc,random,occlusion,greedy")]
    pub methods: Vec<Method>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "acc,auc,cst,sc,gt")]
    pub metrics: Vec<MetricArg>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Selection ratio for the `acc` metric.
    #[arg(long, default_value_t = 0.1)]
    pub ratio: f64,
    /// Base seed of the random explainer.
    #[arg(long, env = "RCX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Seed of the randomized classifier used by `sc`.
    #[arg(long, default_value_t = 1)]
    pub random_model_seed: u64,
    /// Results CSV: method,metric,value,graphs_used,graphs_skipped.
    #[arg(long)]
    pub out: PathBuf,
    /// Accuracy curves CSV for `auc` (default: `<out>.curves.csv`).
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SanityCheckArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub explainer: ExplainerSelection,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Seed of the randomized classifier.
    #[arg(long, default_value_t = 1)]
    pub random_model_seed: u64,
    /// CSV: method,sc,graphs_used,graphs_skipped.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportDotArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Explanations JSON written by `explain`.
    #[arg(long)]
    pub explanations: PathBuf,
    #[arg(long)]
    pub graph: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Policy checkpoint, required when the methods include `rc`.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "random,occlusion,greedy,rc")]
    pub methods: Vec<Method>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Graph sizes for the greedy-screening scaling run.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    pub scaling_edges: Vec<usize>,
    /// Fixed K for the scaling run.
    #[arg(long, default_value_t = 5)]
    pub scaling_k: usize,
    #[arg(long, env = "RCX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Timing CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let args = match config::apply_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

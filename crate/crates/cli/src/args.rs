use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Parses a dash-separated list of layer widths such as `200-100-50`.
pub fn parse_layers(s: &str) -> Result<Vec<usize>, String> {
    let widths: Vec<usize> = s
        .split('-')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad layer width {p:?} in {s:?}")))
        .collect::<Result<_, _>>()?;
    if widths.contains(&0) {
        return Err(format!("layer widths must be positive: {s:?}"));
    }
    Ok(widths)
}

/// A parsed dash-separated width list.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Widths(pub Vec<usize>);

fn widths(s: &str) -> Result<Widths, String> {
    parse_layers(s).map(Widths)
}

#[derive(Debug, Parser)]
#[command(name = "cpgbn", version, about = "Convolutional Poisson gamma belief networks for text")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a frequency-capped vocabulary from a corpus file.
    Vocab(VocabArgs),
    /// Batch Gibbs sampling.
    TrainGibbs(GibbsArgs),
    /// Mini-batch stochastic-gradient MCMC.
    TrainSgmcmc(SgmcmcArgs),
    /// Hybrid encoder and stochastic-gradient MCMC training.
    TrainHybrid(HybridArgs),
    /// Hybrid training with a jointly trained classifier head.
    TrainSupervised(SupervisedArgs),
    /// Posterior-mean layer-one features with frozen globals.
    Extract(ExtractArgs),
    /// Linear classifier on extracted features, or a supervised model's predictions.
    Classify(ClassifyArgs),
    /// Per-kernel phrase tables.
    Phrases(PhrasesArgs),
    /// Topic hierarchy as a Graphviz digraph.
    Tree(TreeArgs),
    /// Summarize a training trace.
    EvalTrace(EvalTraceArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct Output {
    /// Manifest path; defaults to the output path with `.manifest.json` appended.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct VocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Number of most frequent terms kept.
    #[arg(long, default_value_t = 8000)]
    pub cap: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Corpus file: one document per line, optionally `label<TAB>text`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Pad documents shorter than the filter width with the unknown term.
    #[arg(long)]
    pub pad_short: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Layer widths from the bottom, e.g. `200-100-50`; one width gives the single-layer model.
    #[arg(long, default_value = "200-100-50", value_parser = widths)]
    pub layers: Widths,
    #[arg(long, default_value_t = 3)]
    pub filter_width: usize,
    #[arg(long, default_value_t = 0.1)]
    pub e0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub f0: f64,
    /// Dirichlet concentration for kernels and factor columns.
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainOutput {
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct GibbsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub sweeps: usize,
    #[command(flatten)]
    pub out: TrainOutput,
}

#[derive(Debug, Args, Serialize)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eps0: f64,
    #[arg(long, default_value_t = 20.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.7)]
    pub kappa: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct SgmcmcArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Local Gibbs sweeps per mini-batch.
    #[arg(long, default_value_t = 1)]
    pub local_sweeps: usize,
    #[command(flatten)]
    pub out: TrainOutput,
}

#[derive(Debug, Args, Serialize)]
pub struct HybridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Encoder learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[command(flatten)]
    pub out: TrainOutput,
}

#[derive(Debug, Args, Serialize)]
pub struct SupervisedArgs {
    #[command(flatten)]
    pub hybrid: HybridArgs,
    /// Weight of the classification loss.
    #[arg(long, default_value_t = 1.0)]
    pub xi: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 200)]
    pub collect: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    /// Labeled corpus for training (or for evaluating a supervised model).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Feature CSV aligned with `--corpus`; omit to use `--model`'s classifier head.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Held-out labeled corpus; without it cross-validation is used.
    #[arg(long)]
    pub test_corpus: Option<PathBuf>,
    /// Feature CSV aligned with `--test-corpus`.
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    /// Supervised checkpoint, used with `--vocab` instead of features.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub pad_short: bool,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct PhrasesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Words kept per column and phrases listed per kernel.
    #[arg(long, default_value_t = 4)]
    pub top_n: usize,
    /// Text table; a `.json` extension writes JSON instead.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Root layer, counted from 1 at the kernels; defaults to the top layer.
    #[arg(long)]
    pub root_layer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub root_node: usize,
    /// Children per node for each layer below the root, e.g. `3-2`; a single value applies to every layer.
    #[arg(long, default_value = "3", value_parser = widths)]
    pub fan_out: Widths,
    /// Graphviz output.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalTraceArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Column to summarize; defaults to the second column.
    #[arg(long)]
    pub column: Option<String>,
    /// Fraction of rows in the leading and trailing windows.
    #[arg(long, default_value_t = 0.1)]
    pub window: f64,
    /// JSON summary; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

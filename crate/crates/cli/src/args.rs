//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fraudjudger", version, about = "Fraud-user detection, discovery and blacklist upkeep")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for generation, training and clustering.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON settings file (synth, pipeline, train, kmeans, t_fraud, seeds).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory. Defaults to $FRAUDJUDGER_OUT/<command>, else ./fraudjudger-out/<command>.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Share of training users whose labels are revealed.
    #[arg(long, global = true, value_name = "FRACTION")]
    pub labels: Option<f64>,

    #[arg(long, global = true)]
    pub latent_dim: Option<usize>,

    /// Number of k-means clusters.
    #[arg(long, global = true)]
    pub n_cluster: Option<usize>,

    /// Fraud-ratio threshold above which a cluster is a fraud group.
    #[arg(long, global = true)]
    pub t_fraud: Option<f64>,

    #[arg(long, global = true)]
    pub epochs: Option<usize>,

    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted fraud families.
    Synth,
    /// Merge operation and transaction records into an encoded feature matrix.
    Ingest(IngestArgs),
    /// Train a semi-supervised or unsupervised adversarial autoencoder.
    Train(TrainArgs),
    /// Evaluate a trained model on the held-out split.
    Eval(EvalArgs),
    /// Classify users and add detected frauds to the blacklist.
    Detect(DetectArgs),
    /// Cluster latent codes, find potential frauds and report rule candidates.
    Discover(DiscoverArgs),
    /// Run detect, discover and blacklist updates over successive batches.
    Loop(LoopArgs),
    /// Run the seeded experiment sweeps.
    Experiment(ExperimentArgs),
    /// Export a blacklist as CSV without locking it.
    Blacklist(BlacklistArgs),
}

#[derive(Debug, Args)]
pub struct BlacklistArgs {
    #[arg(long, value_name = "PATH")]
    pub blacklist: PathBuf,
}

/// Where the feature matrix comes from. Without `--features`, a synthetic
/// corpus is generated from the settings.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Directory holding features.csv and features.json, or the CSV itself.
    #[arg(long, value_name = "PATH")]
    pub features: Option<PathBuf>,

    /// Ground-truth CSV (user_id, label, family, segment, novel, split, labeled).
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory with operations.csv and transactions.csv (and truth.csv, if present).
    #[arg(long, value_name = "DIR", conflicts_with_all = ["ops", "txs"])]
    pub data: Option<PathBuf>,

    #[arg(long, value_name = "PATH", requires = "txs")]
    pub ops: Option<PathBuf>,

    #[arg(long, value_name = "PATH", requires = "ops")]
    pub txs: Option<PathBuf>,

    /// Fit the vocabulary on the training split of this ground truth.
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,

    /// Encode with the vocabulary of an existing features.json instead of fitting one.
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,

    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Semi,
    #[value(alias = "unsupervised")]
    Unsup,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "semi")]
    pub mode: ModeArg,

    #[command(flatten)]
    pub data: DataArgs,

    /// 100-dimensional latent space, 1024-wide five-layer networks, 500 epochs.
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Semi-supervised model.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Blacklist file; defaults to blacklist.ndjson in the output directory.
    #[arg(long, value_name = "PATH")]
    pub blacklist: Option<PathBuf>,

    /// Only classify the user ids listed in this file, one per line.
    #[arg(long, value_name = "PATH")]
    pub users: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long, value_name = "PATH")]
    pub semi_model: PathBuf,

    #[arg(long, value_name = "PATH")]
    pub unsup_model: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Blacklist file; defaults to blacklist.ndjson in the output directory.
    #[arg(long, value_name = "PATH")]
    pub blacklist: Option<PathBuf>,

    /// Differentiating features listed per fraud group.
    #[arg(long, default_value_t = 10)]
    pub top_features: usize,
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    #[arg(long, default_value_t = 2)]
    pub cycles: usize,

    /// First cycle whose batch contains the novel fraud family.
    #[arg(long, default_value_t = 1)]
    pub novel_from_cycle: usize,

    /// Blacklist file; defaults to blacklist.ndjson in the output directory.
    #[arg(long, value_name = "PATH")]
    pub blacklist: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    LabelRatio,
    LatentDim,
    Discovery,
    All,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub which: Which,

    /// Label ratios of the label-ratio sweep.
    #[arg(long, value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,

    /// Latent dimensions of the latent-dimension sweep.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,

    /// Cluster counts of the discovery experiment.
    #[arg(long, value_delimiter = ',')]
    pub clusters: Option<Vec<usize>>,
}

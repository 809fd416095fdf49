//! The `absa` command line: one subcommand per pipeline stage.
//!
//! Machine output goes to stdout, logs to stderr. Exit codes: 0 success,
//! 1 usage error, 2 data error (malformed input files), 3 runtime failure.

mod commands;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "absa",
    version,
    about = "Aspect-based sentiment analysis workbench for smartphone reviews"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus CSV, drop overlong and excluded comments and write the cleaned corpus.
    Ingest(IngestArgs),
    /// Shuffle a corpus into train/dev/test CSVs with a seed.
    Split(SplitArgs),
    /// Corpus statistics: sizes and per-aspect polarity counts.
    Stats(StatsArgs),
    /// Train a neural or classical model and save its bundle.
    Train(TrainArgs),
    /// Score one or more model bundles on a labelled test CSV.
    Eval(EvalArgs),
    /// Predict aspects and sentiments for texts.
    Predict(PredictArgs),
    /// Pairwise Cohen's kappa over annotation runs.
    Kappa(KappaArgs),
    /// Run the HTTP service (LISTEN_ADDR, DATA_DIR, API_TOKEN).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw corpus CSV (index, comment, n_star, date_time, label[, product]).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Where to write the cleaned corpus.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the rejection log (index<TAB>reason) here.
    #[arg(long)]
    pub rejections: Option<PathBuf>,
    /// File of comment indices to drop (one per line).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Directory for train.csv, dev.csv and test.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Train, dev and test fractions.
    #[arg(long, default_value = "0.7,0.1,0.2")]
    pub ratios: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// bilstm_sa2sl, lstm_baseline, cnn_baseline, naive_bayes, linear_svm or random_forest.
    #[arg(long)]
    pub arch: String,
    /// key = value config file (model and training settings).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    /// Early-stopping set; the training set is scored when absent.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model bundle directory; repeat to compare systems.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Text to classify; repeatable.
    #[arg(long = "text")]
    pub texts: Vec<String>,
    /// File with one text per line.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Full JSON prediction per line, including head probabilities.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum KappaTask {
    Aspect,
    Sentiment,
    Both,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Annotation CSV(s): corpus columns plus `annotator` and optional `round`.
    #[arg(long = "runs", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub task: KappaTask,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "LISTEN_ADDR", default_value = absa_service::DEFAULT_LISTEN_ADDR)]
    pub listen: String,
    #[arg(long, env = "DATA_DIR", default_value = "data")]
    pub data_dir: PathBuf,
    /// Register and activate this bundle before serving.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

/// Invalid flag values detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Maps an error chain onto the exit-code contract.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<absa_core::Error>() {
            return if e.is_data_error() { EXIT_DATA } else { EXIT_RUNTIME };
        }
    }
    EXIT_RUNTIME
}

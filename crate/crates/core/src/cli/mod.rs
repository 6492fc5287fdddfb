//! Command-line front end.
//!
//! Exit codes: 0 success, 1 dataset or I/O failure, 2 configuration or usage
//! error, 3 training divergence.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::train::TrainError;
use crate::tudata::TuError;

pub use commands::{load_checkpoint, Checkpoint, RunSettings};

#[derive(Debug, Parser)]
#[command(
    name = "ssread",
    version,
    about = "Graph classification with structural semantic readout"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cross-validated training; writes reports, loss curves and checkpoints.
    Train(TrainArgs),
    /// Exports node-to-position assignments from a checkpoint (JSON lines).
    Align(AlignArgs),
    /// Exports per-node class activation scores from a checkpoint (JSON lines).
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding `{name}_A.txt`, `{name}_graph_indicator.txt`, ...
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset file prefix; defaults to the last component of `--data`.
    #[arg(long)]
    pub name: Option<String>,
    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gread | ssread
    #[arg(long)]
    pub readout: Option<String>,
    /// sum | max | mean | attention
    #[arg(long)]
    pub agg: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    /// Comma-separated seeds; overridden by `SSREAD_SEED`.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    /// supervised | contrastive
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
    /// Plain random folds and inner splits instead of stratified ones.
    #[arg(long)]
    pub no_stratify: bool,
    /// Output directory (default `runs/{name}`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    /// all | train | val | test
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    /// Comma-separated graph indices (0-based); default: every graph of `--split`.
    #[arg(long)]
    pub graph: Option<String>,
    /// Target class index; default: each graph's own label.
    #[arg(long)]
    pub class: Option<usize>,
    /// all | train | val | test
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) | CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::Data(d) => d.into(),
            TrainError::Config(_) | TrainError::BatchTooSmall(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TuError> for CliError {
    fn from(e: TuError) -> Self {
        match e {
            TuError::TooSmall { .. } | TuError::MissingNodeLabels { .. } => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; messages go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Align(a) => commands::align(a),
        Command::Explain(a) => commands::explain(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

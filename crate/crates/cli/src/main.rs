//! `kgctx`: batch commands for building graph artifacts, extracting path
//! bundles and training the path classifier.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgctx_core::Error as CoreError;

#[derive(Parser, Debug)]
#[command(name = "kgctx", version, about = "Knowledge graph contextualization for entailment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a graph snapshot from a ConceptNet assertions dump (plain or gzip).
    Ingest(IngestArgs),
    /// Attach edge costs to a snapshot and write a cost file.
    Weight(WeightArgs),
    /// Find one cheapest path per concept pair for every instance.
    Extract(ExtractArgs),
    /// Print graph multi-edge statistics and/or bundle statistics.
    Stats(StatsArgs),
    /// Train the path classifier on bundles.
    Train(TrainArgs),
    /// Evaluate a trained classifier on bundles.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub assertions: PathBuf,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WeightArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// dc, rf or grf
    #[arg(long)]
    pub cost: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// Cost file written by `weight` for the same snapshot.
    #[arg(long)]
    pub cost: PathBuf,
    /// Instances as JSON lines with id, premise, hypothesis and label.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_hops: Option<usize>,
    /// Traverse edges in both directions (the default).
    #[arg(long, conflicts_with = "directed")]
    pub undirected: bool,
    /// Only follow edges from start to end concept.
    #[arg(long)]
    pub directed: bool,
    /// post-filter or constrained
    #[arg(long)]
    pub hop_limit: Option<String>,
    /// deterministic or seeded
    #[arg(long)]
    pub tie_break: Option<String>,
    #[arg(long)]
    pub max_ngram: Option<usize>,
    /// One stopword per line; replaces the built-in list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated label set instances must use.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long, required_unless_present = "bundles")]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub bundles: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training bundles (output of `extract`).
    #[arg(long)]
    pub paths: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// relations, entities or both
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub model: PathBuf,
    /// Per-epoch history as JSON lines; defaults to `<model>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Pretrained token vectors, `token v1 ... vd` per line.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub freeze_embeddings: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub paths: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Must match the mode stored in the checkpoint when given.
    #[arg(long)]
    pub mode: Option<String>,
    /// Write per-instance predictions as JSON lines.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Bad flags, config values or argument combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Config(_) | CoreError::UnknownCostKind(_) | CoreError::UnknownTokenMode(_) => 1,
                CoreError::NonFinite(_) | CoreError::InvalidNode(_) | CoreError::IdenticalEndpoints(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Weight(a) => commands::weight(a),
        Command::Extract(a) => commands::extract(a),
        Command::Stats(a) => commands::stats(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}

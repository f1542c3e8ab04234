//! `gubm`: simulate, split, train, evaluate and inspect grid browsing models.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gubm::logio::Fold;
use gubm::DirectionPolicy;

use crate::commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "gubm", version, about = "Grid-based user browsing models for image search logs")]
struct Cli {
    /// Worker threads [default: available parallelism]. Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic log and its ground-truth relevance file.
    Simulate(SimulateArgs),
    /// Assign the sessions of every query to a train or test fold.
    Split(SplitArgs),
    /// Fit a model on a log and write its parameter file.
    Train(TrainArgs),
    /// Score a parameter file on held-out sessions or editorial judgements.
    Evaluate(EvaluateArgs),
    /// Order candidate images of a query by fitted relevance.
    Rerank(RerankArgs),
    /// Descriptive statistics of a log.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML simulation config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Log file to write.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth relevance file [default: <OUT>.truth].
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Session filters applied when a log is loaded.
#[derive(Debug, Args)]
struct FilterArgs {
    /// Drop queries with fewer sessions than this.
    #[arg(long, default_value_t = 10)]
    min_sessions: usize,
    /// Keep at most this many sessions per query, first in file order (0 keeps all).
    #[arg(long, default_value_t = 1000)]
    max_sessions: usize,
    /// Drop hovers followed by the next event sooner than this many milliseconds.
    #[arg(long, default_value_t = 0)]
    min_hover_dwell_ms: u64,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    log: PathBuf,
    /// Train:test ratio.
    #[arg(long, default_value = "7:3")]
    ratio: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Manifest file to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    /// Grid model on clicks and hovers.
    Gubm,
    /// Grid model on clicks only.
    GubmC,
    /// List baseline.
    Ubm,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    log: PathBuf,
    /// Split manifest; without one every session is used.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fold of the manifest to train on [default: train].
    #[arg(long, requires = "manifest")]
    split: Option<Fold>,
    #[arg(long, value_enum, default_value_t = Model::Gubm)]
    model: Model,
    /// Scan order: ltor, rtol, zshape or zshape-rtol.
    #[arg(long, default_value = "zshape")]
    direction: DirectionPolicy,
    /// EM rounds.
    #[arg(long, default_value_t = 40)]
    iters: usize,
    /// Page truncation: results beyond the first K are ignored.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Initial value of every parameter.
    #[arg(long, default_value_t = 0.5)]
    init: f64,
    /// Stop early once the mean absolute parameter change falls below this.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Leave sessions without interactions out of training.
    #[arg(long)]
    exclude_empty: bool,
    /// Parameter file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the log-likelihood after every round as TSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Metric {
    Perplexity,
    Ndcg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Log to score; needed for perplexity.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fold of the manifest to evaluate on [default: test].
    #[arg(long, requires = "manifest")]
    split: Option<Fold>,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Perplexity)]
    metric: Metric,
    /// Judgement file (`query image topical quality` per line); needed for ndcg.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// NDCG cut-offs.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    depths: Vec<usize>,
    /// TSV report [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a JSON summary.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    filters: FilterArgs,
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    query: String,
    /// One image id per line; `-` reads stdin.
    #[arg(long)]
    candidates: PathBuf,
    /// Print the relevance estimate next to each id.
    #[arg(long)]
    scores: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Stat {
    /// Up/down split of adjacent interaction pairs.
    Directions,
    /// Distance between adjacent interactions.
    Distances,
    /// Click and hover counts.
    Counts,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, value_enum)]
    stat: Stat,
    /// TSV report [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Rerank(a) => commands::rerank_command(a),
        Command::Analyze(a) => commands::analyze(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.into()).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(Failure::usage(format!("cannot start {n} workers: {e}"))),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gubm: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

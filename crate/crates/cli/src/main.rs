//! `rubric-rerank`: rubric-based pointwise reranking, evaluation, and
//! training-data export from the command line.

mod backends;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

const ENV_HELP: &str = "Environment:
  RUBRIC_RERANK_API_KEY  API key sent as a bearer token to HTTP backends (unset: no auth header)";

#[derive(Parser)]
#[command(
    name = "rubric-rerank",
    version,
    about = "Rubric-based pointwise reranking with sampled relevance scoring",
    after_help = ENV_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Re-rank first-stage candidates by rubric-scored relevance
    Rerank(RerankArgs),
    /// Evaluate a run file against qrels with nDCG@k
    Eval(EvalArgs),
    /// Curate SFT data: sample teacher trajectories, keep the closest-to-mean
    CurateSft(CurateSftArgs),
    /// Compute composite intra/inter-document rewards and export them
    ComputeRewards(ComputeRewardsArgs),
    /// Histogram integrated scores for judged positive vs negative documents
    ScoreDist(ScoreDistArgs),
    /// Compare metric reports side by side
    Compare(CompareArgs),
}

/// Flags shared by every command that reads a dataset from disk.
#[derive(Args, Clone)]
struct DatasetArgs {
    /// Directory containing one subdirectory per dataset
    #[arg(long, value_name = "DIR")]
    dataset_root: PathBuf,
    /// Dataset name; also selects the rubric
    #[arg(long, value_name = "NAME")]
    dataset: String,
    /// Rubric config JSON overlaying the built-in defaults
    #[arg(long, value_name = "FILE")]
    rubrics: Option<PathBuf>,
    /// Inject the 512-token length-control instruction into prompts
    #[arg(long)]
    length_control: bool,
    /// Fail on dangling candidate references instead of dropping them
    #[arg(long)]
    strict: bool,
}

/// Flags shared by every command that talks to a scoring backend. Values
/// omitted here fall back to the config file, then to built-in defaults.
#[derive(Args, Clone, Default)]
struct BackendArgs {
    /// Chat-completions endpoint URL, or a mock: URL for the deterministic
    /// offline backend (e.g. mock://qrels?positive=80&negative=25&noise=15)
    #[arg(long, value_name = "URL")]
    backend: Option<String>,
    /// Model name sent to the backend [default: local-model]
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    /// Sampling temperature [default: 1.0 when sampling more than once, else 0.0]
    #[arg(long, value_name = "T")]
    temperature: Option<f64>,
    /// Maximum in-flight backend requests [default: 8]
    #[arg(long, value_name = "N")]
    concurrency: Option<usize>,
    /// Retry budget per sample slot [default: 2]
    #[arg(long, value_name = "N")]
    retries: Option<u32>,
    /// Per-request timeout in seconds [default: 120]
    #[arg(long, value_name = "S")]
    timeout_secs: Option<u64>,
    /// Seed for the mock backend [default: 42]
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Config file (TOML); flags take precedence over it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Trajectories sampled per pair (K); mean-score@K [default: 1]
    #[arg(long, value_name = "K")]
    samples: Option<usize>,
    /// Candidate depth to re-rank [default: 100]
    #[arg(long, value_name = "N")]
    depth: Option<usize>,
    /// Score integration: uniform or likelihood [default: uniform]
    #[arg(long, value_name = "MODE")]
    weighting: Option<String>,
    /// Tag written into the run file [default: rubric-rerank]
    #[arg(long, value_name = "TAG")]
    tag: Option<String>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Run file to evaluate
    #[arg(long, value_name = "FILE")]
    run: PathBuf,
    /// Qrels file (query_id 0 doc_id relevance)
    #[arg(long, value_name = "FILE")]
    qrels: PathBuf,
    /// Rank cutoff [default: 10]
    #[arg(long, value_name = "K")]
    k: Option<usize>,
    /// Config file (TOML); flags take precedence over it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Report tag [default: run file stem]
    #[arg(long, value_name = "TAG")]
    tag: Option<String>,
    /// Error on run queries missing from the qrels
    #[arg(long)]
    strict: bool,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct CurateSftArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    backend: BackendArgs,
    /// Training samples JSONL (query_id, positive_doc_id, negative_doc_id)
    #[arg(long, value_name = "FILE")]
    samples_file: PathBuf,
    /// Teacher trajectories sampled per pair [default: 8]
    #[arg(long, value_name = "K")]
    teacher_samples: Option<usize>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct ComputeRewardsArgs {
    /// Precomputed rollout trajectories JSONL; skips sampling entirely
    #[arg(long, value_name = "FILE")]
    rollouts: Option<PathBuf>,
    /// Training samples JSONL (required unless --rollouts is given)
    #[arg(long, value_name = "FILE")]
    samples_file: Option<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgsOpt,
    #[command(flatten)]
    backend: BackendArgs,
    /// Trajectories rolled out per document (N) [default: 8]
    #[arg(long, value_name = "N")]
    rollouts_per_doc: Option<usize>,
    /// Intra/inter mixing weight, strictly between 0 and 1 [default: 0.75]
    #[arg(long, value_name = "A")]
    alpha: Option<f64>,
    /// Minimum deviation gate for the intra-document reward [default: 20]
    #[arg(long, value_name = "T")]
    tau: Option<f64>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Dataset flags where the root/name pair is optional (rewards can run
/// purely from a rollout file).
#[derive(Args, Clone, Default)]
struct DatasetArgsOpt {
    /// Directory containing one subdirectory per dataset
    #[arg(long, value_name = "DIR")]
    dataset_root: Option<PathBuf>,
    /// Dataset name; also selects the rubric
    #[arg(long, value_name = "NAME")]
    dataset: Option<String>,
    /// Rubric config JSON overlaying the built-in defaults
    #[arg(long, value_name = "FILE")]
    rubrics: Option<PathBuf>,
    /// Inject the 512-token length-control instruction into prompts
    #[arg(long)]
    length_control: bool,
    /// Fail on dangling candidate references instead of dropping them
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ScoreDistArgs {
    /// Audit JSONL produced by rerank
    #[arg(long, value_name = "FILE")]
    audit: PathBuf,
    /// Qrels file used to split positives from negatives
    #[arg(long, value_name = "FILE")]
    qrels: PathBuf,
    /// Histogram bucket width; must divide 100 [default: 10]
    #[arg(long, value_name = "W")]
    bucket_width: Option<u32>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Metric report JSON files produced by eval; the first is the baseline
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Command failure, split by exit code: 1 for validation, 2 for runtime.
#[derive(Debug)]
enum CliError {
    Validation(String),
    Runtime(anyhow::Error),
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self::Validation(message.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        Self::Runtime(err)
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err)
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    let result = runtime.block_on(async {
        match cli.command {
            Command::Rerank(args) => commands::rerank::run(args).await,
            Command::Eval(args) => commands::eval::run(args),
            Command::CurateSft(args) => commands::curate::run(args).await,
            Command::ComputeRewards(args) => commands::rewards::run(args).await,
            Command::ScoreDist(args) => commands::dist::run(args),
            Command::Compare(args) => commands::compare::run(args),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

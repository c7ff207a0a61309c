use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

mod commands;
mod config;
mod exit;

use solfix::prompt::Granularity;

#[derive(Parser, Debug)]
#[command(
    name = "solfix",
    version,
    about = "Repair Solidity contracts broken by compiler-version migrations"
)]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Settings file (default: ./solfix.toml when present).
    #[arg(long, global = true, env = "SOLFIX_CONFIG")]
    pub config: Option<PathBuf>,
    /// Compiler table (TOML, `[compilers] "0.8" = "/path/to/solc"`).
    #[arg(long, global = true, env = "SOLFIX_COMPILERS")]
    pub compilers: Option<PathBuf>,
    /// Root directory for per-job working directories.
    #[arg(long, global = true, env = "SOLFIX_WORKDIR")]
    pub workdir: Option<PathBuf>,
    /// More logging on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Build, inspect and query the knowledge base.
    Kb {
        #[command(subcommand)]
        cmd: KbCmd,
    },
    /// Print the error-relevant slice of a contract.
    Slice(SliceArgs),
    /// Work with SEARCH/REPLACE patches.
    Patch {
        #[command(subcommand)]
        cmd: PatchCmd,
    },
    /// Repair one contract.
    Fix(FixArgs),
    /// Repair every instance of a dataset and write the reports.
    Batch(BatchArgs),
    /// Score repair reports against dataset groundtruth.
    Eval(EvalArgs),
    /// Pass rate as a function of the iteration cap.
    Sweep(SweepArgs),
    /// Print the tool version and configured compilers.
    Version,
}

#[derive(Subcommand, Debug)]
pub enum KbCmd {
    /// Ingest `<from>-<to>.html` documentation files and curate them.
    Build {
        #[arg(long)]
        html: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a labels skeleton covering every ingested entry.
    LabelTemplate {
        #[arg(long)]
        html: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Stats {
        kb: PathBuf,
    },
    /// Rank entries against a compiler error.
    Query {
        kb: PathBuf,
        /// Compiler output or a bare error message.
        #[arg(long)]
        error_file: PathBuf,
        #[arg(short, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        weight_code: Option<f64>,
        #[arg(long)]
        source_version: Option<String>,
        #[arg(long)]
        target_version: Option<String>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Acc@k over a line-delimited eval set.
    Acc {
        kb: PathBuf,
        #[arg(long)]
        eval_set: PathBuf,
        #[arg(short, default_values_t = [1usize, 3, 5])]
        k: Vec<usize>,
        #[arg(long)]
        weight_code: Option<f64>,
    },
}

#[derive(Args, Debug)]
pub struct SliceArgs {
    pub file: PathBuf,
    /// Compiler output whose first error drives the slice.
    #[arg(long, conflicts_with_all = ["line", "keyword"])]
    pub error_file: Option<PathBuf>,
    #[arg(long)]
    pub line: Option<u32>,
    #[arg(long)]
    pub column: Option<u32>,
    #[arg(long = "keyword")]
    pub keyword: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum PatchCmd {
    /// Apply a model response to a source file.
    Apply {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        patch: PathBuf,
        /// Overwrite the source file.
        #[arg(long, conflicts_with = "out")]
        in_place: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Retry with whitespace-insensitive matching when the exact search fails.
        #[arg(long)]
        lenient: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ProviderArgs {
    /// OpenAI-compatible endpoint, e.g. http://localhost:8000/v1.
    #[arg(long, env = "SOLFIX_LLM_BASE_URL")]
    pub base_url: Option<String>,
    #[arg(long, env = "SOLFIX_LLM_MODEL")]
    pub model: Option<String>,
    #[arg(long, env = "SOLFIX_LLM_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Use this embedding model for retrieval instead of the lexical ranker.
    #[arg(long, env = "SOLFIX_EMBEDDING_MODEL")]
    pub embedding_model: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct RepairArgs {
    /// general, coarse or fine.
    #[arg(long, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    /// Send the whole file instead of the slice.
    #[arg(long)]
    pub no_slicing: bool,
    /// Skip knowledge retrieval (prompts drop to coarse granularity).
    #[arg(long)]
    pub no_retrieval: bool,
    /// Knowledge entries per prompt (1-3).
    #[arg(short = 'k', long = "knowledge")]
    pub k_knowledge: Option<usize>,
    /// Prompt every error of a compile run, not just the first.
    #[arg(long)]
    pub all_errors: bool,
    #[arg(long)]
    pub prompt_budget: Option<usize>,
    #[arg(long)]
    pub weight_code: Option<f64>,
    #[arg(long, env = "SOLFIX_KB")]
    pub kb: Option<PathBuf>,
    /// Task-description template file.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Keep per-job working directories.
    #[arg(long)]
    pub keep_artifacts: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Args, Debug)]
pub struct FixArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub source_version: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Replay responses from a line-delimited transcript instead of calling a model.
    #[arg(long)]
    pub mock: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the final source here.
    #[arg(long, conflicts_with = "in_place")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub in_place: bool,
    #[command(flatten)]
    pub repair: RepairArgs,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory of `<instance id>.jsonl` transcripts.
    #[arg(long)]
    pub mock_dir: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Where to write the report list (JSON array).
    #[arg(long)]
    pub reports: Option<PathBuf>,
    #[command(flatten)]
    pub repair: RepairArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub reports: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub mock_dir: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Caps to try: `1..10` (inclusive) or `N` for 1..N.
    #[arg(long, default_value = "1..10", value_parser = parse_caps)]
    pub max_iterations: std::ops::RangeInclusive<u32>,
    /// Plot-ready CSV output.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub repair: RepairArgs,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse()
}

fn parse_caps(s: &str) -> Result<std::ops::RangeInclusive<u32>, String> {
    let num = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("`{t}`: {e}"));
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.trim_start_matches('='))?),
        None => (1, num(s)?),
    };
    if a == 0 || a > b {
        return Err(format!("`{s}` is not a range of caps >= 1"));
    }
    Ok(a..=b)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

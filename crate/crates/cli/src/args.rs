//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "egur", version, about = "Run strategy programs and the experience-guided reasoner")]
pub struct Cli {
    /// TOML configuration file. Also read from EGUR_CONFIG.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one strategy on one input and print the answer and ledger.
    RunStrategy(RunStrategyArgs),
    /// Run the reasoner over a task stream, learning as it goes.
    Continual(ContinualArgs),
    /// Generate 3-SAT train and test splits.
    GenTasks(GenTasksArgs),
    /// Render a recorded trace as a transcript.
    Replay(ReplayArgs),
    /// Summarize a report written by `continual`.
    Report(ReportArgs),
    /// List builtin strategies with their parameters and structure.
    ListBuiltins,
}

/// Flags shared by commands that call a backend.
#[derive(Debug, Args, Default)]
pub struct BackendArgs {
    /// `scripted:FILE` or `http`.
    #[arg(long, value_name = "SPEC")]
    pub backend: Option<String>,

    /// Bound on recursive unrolling.
    #[arg(long, value_name = "N")]
    pub fix_depth: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,

    /// Log every HTTP exchange to `fixtures.jsonl` under the output directory.
    #[arg(long)]
    pub record_fixtures: bool,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunStrategyArgs {
    /// File holding the strategy program.
    #[arg(long, value_name = "FILE", required_unless_present = "builtin", conflicts_with = "builtin")]
    pub strat: Option<PathBuf>,

    /// Name of a builtin strategy, e.g. `cot` or `codeact`.
    #[arg(long, value_name = "NAME")]
    pub builtin: Option<String>,

    /// Question text passed to the strategy.
    #[arg(long)]
    pub input: String,

    /// Expected answer; prints a verdict when given.
    #[arg(long)]
    pub gold: Option<String>,

    /// Parallel samples for self_consistency.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,

    /// Round limit for eval_opt and codeact.
    #[arg(long, value_name = "N")]
    pub max_rounds: Option<usize>,

    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ContinualArgs {
    /// Task stream, one JSON object per line.
    #[arg(long, value_name = "FILE")]
    pub tasks: PathBuf,

    /// Held-out tasks evaluated at checkpoints.
    #[arg(long, value_name = "FILE")]
    pub holdout: Option<PathBuf>,

    /// Candidate strategies per question.
    #[arg(long)]
    pub k: Option<usize>,

    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,

    /// Starting context file; its `.meta.json` sidecar is read when present.
    #[arg(long, value_name = "FILE")]
    pub context: Option<PathBuf>,

    /// Directory with `guide.md` and `consolidator.md` templates.
    #[arg(long, value_name = "DIR")]
    pub prompts: Option<PathBuf>,

    /// Keep the stream in file order.
    #[arg(long)]
    pub no_shuffle: bool,

    /// Validate every input without calling the backend.
    #[arg(long)]
    pub dry_run: bool,

    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct GenTasksArgs {
    #[arg(long, default_value_t = 400)]
    pub train: usize,

    #[arg(long, default_value_t = 40)]
    pub test: usize,

    #[arg(long, default_value_t = 5)]
    pub min_vars: u32,

    #[arg(long, default_value_t = 40)]
    pub max_vars: u32,

    /// Clauses per variable.
    #[arg(long, default_value_t = 4.26)]
    pub ratio: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Keep only satisfiable formulas.
    #[arg(long)]
    pub satisfiable_only: bool,

    /// Directory receiving `train.jsonl` and `test.jsonl`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Trace file in JSONL form.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json`, or the directory holding it.
    #[arg(long, value_name = "PATH")]
    pub report: PathBuf,

    /// Print the per-sample cost table.
    #[arg(long)]
    pub csv: bool,
}

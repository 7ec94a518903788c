use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kenforge::{BandwidthRule, GridFormat, KdeConfig, TensorFilter};

mod commands;
mod error;

use error::{CliError, CliResult};

/// KDE-based subnetwork extraction, comparison and dataset distillation.
///
/// JSON results go to stdout; logs go to stderr.
#[derive(Parser, Debug)]
#[command(name = "kenforge", version, about)]
struct Cli {
    /// Worker threads for parallel stages (0 = one per core).
    #[arg(long, global = true, env = "KENFORGE_THREADS", default_value_t = 0)]
    threads: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Majority-vote an annotation CSV into one dataset per language variant.
    Distill(DistillArgs),
    /// Build top-k masks and a pruned checkpoint for a fixed k.
    Prune(PruneArgs),
    /// Search a k schedule for the smallest k that matches a baseline score.
    Sweep(SweepArgs),
    /// Pairwise overlap between two mask sets.
    Compare(CompareArgs),
    /// Positions retained by every one of several mask sets.
    Inbreadth(InbreadthArgs),
    /// Common / A-only / B-only grids for one tensor of two mask sets.
    Viz(VizArgs),
}

#[derive(Args, Debug)]
struct DistillArgs {
    /// Long-format annotation CSV.
    input: PathBuf,
    /// Directory for `<variant>.csv` files and `stats.json`.
    out_dir: PathBuf,
    /// Header remapping, e.g. `label=Label,annotator=user`.
    #[arg(long)]
    columns: Option<String>,
}

#[derive(Args, Debug, Default)]
#[group(multiple = false)]
struct TensorSelect {
    /// Comma-separated tensor names.
    #[arg(long, value_delimiter = ',')]
    tensors: Option<Vec<String>>,
    /// Regular expression matched against tensor names.
    #[arg(long)]
    tensor_regex: Option<String>,
}

impl TensorSelect {
    fn filter(&self) -> CliResult<TensorFilter> {
        match (&self.tensors, &self.tensor_regex) {
            (Some(names), _) => Ok(TensorFilter::names(names.iter().cloned())),
            (None, Some(re)) => TensorFilter::pattern(re)
                .map_err(|e| CliError::input(format!("--tensor-regex: {e}"))),
            (None, None) => Ok(TensorFilter::All),
        }
    }
}

#[derive(Args, Debug)]
struct KdeArgs {
    /// Bandwidth rule: scott, silverman, or fixed:<h>.
    #[arg(long, default_value = "scott")]
    bandwidth: BandwidthRule,
    /// Bandwidth used when the rule yields zero or a non-finite value.
    #[arg(long, default_value_t = 1e-9)]
    degenerate_bandwidth: f64,
}

impl KdeArgs {
    fn config(&self) -> CliResult<KdeConfig> {
        let cfg = KdeConfig {
            degenerate_bandwidth: self.degenerate_bandwidth,
            ..KdeConfig::with_bandwidth(self.bandwidth)
        };
        cfg.validate().map_err(CliError::input)?;
        Ok(cfg)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, Default)]
enum Scope {
    /// Only tensors that were masked.
    #[default]
    Masked,
    /// Every tensor in the fine-tuned checkpoint; unmasked ones count as retained.
    All,
}

#[derive(Args, Debug)]
struct PruneArgs {
    /// Pre-trained checkpoint (.kenc).
    pre: PathBuf,
    /// Fine-tuned checkpoint (.kenc).
    fine: PathBuf,
    /// Entries retained per row.
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    select: TensorSelect,
    #[command(flatten)]
    kde: KdeArgs,
    /// Write the mask set here (.kenm).
    #[arg(long)]
    out_masks: Option<PathBuf>,
    /// Write the pruned checkpoint here (.kenc).
    #[arg(long)]
    out_pruned: Option<PathBuf>,
    /// Tensors counted in the reset percentage.
    #[arg(long, value_enum, default_value_t = Scope::Masked)]
    scope: Scope,
}

#[derive(Args, Debug)]
#[group(id = "evaluator", required = true, multiple = false, args = ["eval_cmd", "eval_synthetic"])]
struct SweepArgs {
    pre: PathBuf,
    fine: PathBuf,
    /// Strictly ascending k values, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    schedule: Vec<usize>,
    /// Scoring command; the staged checkpoint path is appended as the last
    /// argument and the last token of its stdout is read as the score.
    #[arg(long)]
    eval_cmd: Option<String>,
    /// Score by negative squared distance to the fine-tuned checkpoint.
    #[arg(long)]
    eval_synthetic: bool,
    /// Score to match; defaults to the evaluator's score of the fine-tuned model.
    #[arg(long, allow_negative_numbers = true)]
    baseline: Option<f64>,
    #[command(flatten)]
    select: TensorSelect,
    #[command(flatten)]
    kde: KdeArgs,
    #[arg(long)]
    out_masks: Option<PathBuf>,
    #[arg(long)]
    out_pruned: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[command(flatten)]
    select: TensorSelect,
    /// Label for A (defaults to the mask set's variant or model metadata).
    #[arg(long)]
    label_a: Option<String>,
    #[arg(long)]
    label_b: Option<String>,
    /// Column name used in CSV output.
    #[arg(long)]
    model: Option<String>,
    /// Also write the report; `.csv` selects the overlap table, anything else JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InbreadthArgs {
    /// Two or more mask sets (.kenm).
    #[arg(required = true, num_args = 2..)]
    masks: Vec<PathBuf>,
    #[command(flatten)]
    select: TensorSelect,
}

#[derive(Args, Debug)]
struct VizArgs {
    a: PathBuf,
    b: PathBuf,
    /// Tensor to render.
    #[arg(long)]
    tensor: String,
    #[arg(long, default_value = "pgm")]
    format: GridFormat,
    /// Block size; a block is drawn retained if any cell in it is.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Output files are `<prefix>.common.<ext>`, `<prefix>.a_only.<ext>` and `<prefix>.b_only.<ext>`.
    #[arg(long)]
    out_prefix: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn init_threads(threads: usize) -> CliResult<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(CliError::input)?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Distill(a) => commands::distill(a),
        Command::Prune(a) => commands::prune(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Compare(a) => commands::compare(a),
        Command::Inbreadth(a) => commands::inbreadth(a),
        Command::Viz(a) => commands::viz(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(json) => {
            println!("{}", serde_json::to_string_pretty(&json).expect("json output"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

//! `shapsel`: Shapley-value feature selection for tree ensembles.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "shapsel",
    version,
    about = "Shapley-value feature selection for tree ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run backward elimination and write the selection report.
    Select(SelectArgs),
    /// Dump per-row Shapley values as CSV.
    Shap(ShapArgs),
    /// Train the built-in gradient-boosted trees and write the model JSON.
    Train(TrainArgs),
    /// Eliminate once, then report selections over several thresholds.
    Sweep(SweepArgs),
    /// Write the seeded synthetic benchmark as train/validation/test CSVs.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Auto,
    Regression,
    Binary,
    Multiclass,
}

#[derive(Debug, Args)]
pub struct SelectionFlags {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Validation CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column name.
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
    /// L1 weight of the significance regressions.
    #[arg(long = "l1-weight", default_value_t = 1e-6, value_parser = parse_l1)]
    pub l1_weight: f64,
    /// Echoed into the report.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub flags: SelectionFlags,
    #[arg(long, default_value_t = 0.05, value_parser = parse_threshold)]
    pub threshold: f64,
    /// Report path; `-` writes the JSON to stdout and the table to stderr.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ShapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Target column to ignore, if the CSV has one.
    #[arg(long)]
    pub target: Option<String>,
    /// CSV path or `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoostFlags {
    #[arg(long, default_value_t = 100)]
    pub rounds: usize,
    #[arg(long = "max-depth", default_value_t = 4)]
    pub max_depth: usize,
    #[arg(long = "learning-rate", default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long = "min-child-weight", default_value_t = 1.0)]
    pub min_child_weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV (or the full dataset with `--split`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
    #[command(flatten)]
    pub boost: BoostFlags,
    /// Shuffle and split `--data` into train/validation/test fractions, e.g.
    /// `0.6/0.2/0.2`; the model is trained on the first part.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<[f64; 3]>,
    /// Where the split CSVs go (default: next to the model).
    #[arg(long = "split-dir")]
    pub split_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model JSON path or `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: SelectionFlags,
    /// Comma-separated thresholds in (0,1].
    #[arg(long, default_value = "0.001,0.01,0.05,0.1,0.5,1.0", value_parser = parse_thresholds)]
    pub thresholds: Thresholds,
    /// Retrain on each selected subset and report this validation metric.
    #[arg(long)]
    pub metric: Option<shapsel_core::Metric>,
    /// Training CSV used for retraining (required with `--metric`).
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub boost: BoostFlags,
    /// CSV path or `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Regression)]
    pub task: SynthKind,
    #[arg(long = "n-train", default_value_t = 5000)]
    pub n_train: usize,
    #[arg(long = "n-validation", default_value_t = 2000)]
    pub n_validation: usize,
    #[arg(long = "n-test", default_value_t = 2000)]
    pub n_test: usize,
    #[arg(long = "n-noise", default_value_t = 15)]
    pub n_noise: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Directory receiving train.csv, validation.csv and test.csv.
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Regression,
    Binary,
    Multiclass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds(pub Vec<f64>);

fn parse_threshold(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err("threshold must be in (0,1]".into())
    }
}

fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    let values = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(parse_threshold)
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("no thresholds given".into());
    }
    Ok(Thresholds(values))
}

fn parse_l1(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("L1 weight must be finite and nonnegative".into())
    }
}

fn parse_split(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split('/')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{p}` is not a number"))
        })
        .collect::<Result<_, _>>()?;
    let [a, b, c] = parts[..] else {
        return Err("split must have three parts, e.g. 0.6/0.2/0.2".into());
    };
    if [a, b, c].iter().any(|v| v.is_nan() || *v < 0.0)
        || a <= 0.0
        || ((a + b + c) - 1.0).abs() > 1e-9
    {
        return Err("split fractions must be nonnegative, train > 0, and sum to 1".into());
    }
    Ok([a, b, c])
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SHAPSEL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::usage(format!(
            "SHAPSEL_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size worker pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Select(args) => commands::select(&args),
        Command::Shap(args) => commands::shap(&args),
        Command::Train(args) => commands::train(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Synth(args) => commands::synth(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.kind as u8)
        }
    }
}

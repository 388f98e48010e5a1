//! `augur`: command-line front end for the forecasting pipeline.
//!
//! Each subcommand wraps one stage of the library, from OHLCV ingestion
//! through training, news scoring, fusion, and evaluation; `e2e` chains the
//! whole pipeline on generated data. Settings come from an optional
//! `key = value` file (see [`config`]); flags override file values, which
//! override built-in defaults.
//!
//! Conventions: deterministic results go to stdout, progress lines and file
//! notices go to stderr, and every produced file lands inside the output
//! directory. Exit codes: 0 success, 1 usage error, 2 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use augur_core::convlstm::LossKind;
use augur_core::metrics::ReportFormat;
use augur_core::sentiment::Granularity;

#[derive(Parser)]
#[command(
    name = "augur",
    version,
    about = "Conv-LSTM price forecasts fused with weighted news sentiment"
)]
pub struct Cli {
    /// Settings file: `key = value` lines under `[section]` headers.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory receiving every output file.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a stock CSV and write it back in canonical form.
    Ingest(IngestArgs),
    /// Search for the best training window length.
    FindSeqlen(FindSeqlenArgs),
    /// Train the price model and write a checkpoint.
    Train(TrainArgs),
    /// Run a checkpoint over a stock series and write predictions.
    Predict(PredictArgs),
    /// Score a news feed and write per-article sentiment.
    ScoreNews(ScoreNewsArgs),
    /// Join predictions with bucketed sentiment into fusion records.
    Fuse(FuseArgs),
    /// Render fusion records as a JSONL fine-tuning corpus.
    EmitCorpus(EmitCorpusArgs),
    /// Fit the linear fusion model to fusion records.
    FitSurrogate(FitSurrogateArgs),
    /// Score predictions against actuals, optionally versus a baseline.
    Evaluate(EvaluateArgs),
    /// Generate a coupled synthetic price series and news feed.
    Synth(SynthArgs),
    /// Run the full pipeline on synthetic data and print the comparison.
    E2e(E2eArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Stock CSV path (falls back to `[paths] stock_csv`).
    #[arg(long, value_name = "FILE")]
    pub stock: Option<PathBuf>,
}

#[derive(Args)]
pub struct FindSeqlenArgs {
    /// Stock CSV path (falls back to `[paths] stock_csv`).
    #[arg(long, value_name = "FILE")]
    pub stock: Option<PathBuf>,

    /// Training epochs per probed window length.
    #[arg(long, value_name = "N")]
    pub probe_epochs: Option<usize>,

    /// Fraction of rows probes train on; the rest scores them.
    #[arg(long, value_name = "FRAC")]
    pub train_fraction: Option<f64>,

    /// Window length the search starts from.
    #[arg(long, value_name = "N")]
    pub initial_len: Option<usize>,

    /// Largest window length the search may visit.
    #[arg(long, value_name = "N")]
    pub max_len: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Stock CSV path (falls back to `[paths] stock_csv`).
    #[arg(long, value_name = "FILE")]
    pub stock: Option<PathBuf>,

    /// Input window length.
    #[arg(long, value_name = "N")]
    pub window_len: Option<usize>,

    /// Training epochs.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,

    /// Seed for parameter init and batch shuffling.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Training loss.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Checkpoint path (defaults to model.json in the output dir).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    /// Stock CSV path (falls back to `[paths] stock_csv`).
    #[arg(long, value_name = "FILE")]
    pub stock: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreNewsArgs {
    /// News feed JSON path (falls back to `[paths] news_json`).
    #[arg(long, value_name = "FILE")]
    pub news: Option<PathBuf>,

    /// Source weight TSV (falls back to `[paths] sources_tsv`, then the
    /// builtin registry).
    #[arg(long, value_name = "FILE")]
    pub sources: Option<PathBuf>,

    /// Sentiment lexicon TSV (falls back to `[paths] lexicon_tsv`, then the
    /// builtin lexicon).
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,

    /// External scorer command spoken to over stdin/stdout, one article per
    /// line. Takes precedence over any lexicon.
    #[arg(long, value_name = "CMD")]
    pub scorer_cmd: Option<String>,

    /// Argument for the external scorer command. Repeatable.
    #[arg(long, value_name = "ARG")]
    pub scorer_arg: Vec<String>,

    /// Weight for sources missing from the registry.
    #[arg(long, value_name = "W")]
    pub default_weight: Option<f64>,

    /// Fetch the feed from a News-API-shaped endpoint instead of a file.
    /// AUGUR_NEWS_API_KEY, when set, is sent as the API key.
    #[cfg(feature = "fetch")]
    #[arg(long, value_name = "URL")]
    pub fetch_url: Option<String>,
}

#[derive(Args)]
pub struct FuseArgs {
    /// Prediction CSV (defaults to predictions.csv in the output dir).
    #[arg(long, value_name = "FILE")]
    pub predictions: Option<PathBuf>,

    /// Scored-article CSV (defaults to scored.csv in the output dir).
    #[arg(long, value_name = "FILE")]
    pub scored: Option<PathBuf>,

    /// Stock CSV supplying actual closes (falls back to `[paths] stock_csv`).
    #[arg(long, value_name = "FILE")]
    pub stock: Option<PathBuf>,

    /// Sentiment aggregation bucket.
    #[arg(long, value_enum)]
    pub granularity: Option<GranularityArg>,

    /// Days sentiment is shifted forward before the date join.
    #[arg(long, value_name = "N")]
    pub lag_days: Option<i64>,
}

#[derive(Args)]
pub struct EmitCorpusArgs {
    /// Fusion record CSV (defaults to records.csv in the output dir).
    #[arg(long, value_name = "FILE")]
    pub records: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitSurrogateArgs {
    /// Fusion record CSV (defaults to records.csv in the output dir).
    #[arg(long, value_name = "FILE")]
    pub records: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Stock CSV with the actual closes.
    #[arg(long, value_name = "FILE")]
    pub actual: PathBuf,

    /// Prediction CSV to score.
    #[arg(long, value_name = "FILE")]
    pub predicted: PathBuf,

    /// Optional baseline prediction CSV; prints the comparison table.
    #[arg(long, value_name = "FILE")]
    pub baseline: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: FormatArg,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Trading days to generate.
    #[arg(long, value_name = "N")]
    pub days: Option<usize>,

    /// Generator seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Starting price level.
    #[arg(long, value_name = "P")]
    pub base_price: Option<f64>,

    /// Daily return standard deviation on quiet days.
    #[arg(long, value_name = "SD")]
    pub volatility: Option<f64>,

    /// Per-day probability of a news event.
    #[arg(long, value_name = "P")]
    pub jump_probability: Option<f64>,

    /// Fractional next-day move an event causes.
    #[arg(long, value_name = "M")]
    pub jump_magnitude: Option<f64>,

    /// Fewest articles per event.
    #[arg(long, value_name = "N")]
    pub articles_min: Option<usize>,

    /// Most articles per event.
    #[arg(long, value_name = "N")]
    pub articles_max: Option<usize>,

    /// First trading day, ISO date.
    #[arg(long, value_name = "DATE", value_parser = parse_date)]
    pub start_date: Option<NaiveDate>,
}

#[derive(Args)]
pub struct E2eArgs {
    /// Seed for both data generation and training.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Trading days to generate.
    #[arg(long, value_name = "N")]
    pub days: Option<usize>,

    /// Training epochs.
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,

    /// Input window length.
    #[arg(long, value_name = "N")]
    pub window_len: Option<usize>,

    /// Fraction of days used for training.
    #[arg(long, value_name = "FRAC")]
    pub train_fraction: Option<f64>,

    /// Daily return standard deviation on quiet days.
    #[arg(long, value_name = "SD")]
    pub volatility: Option<f64>,

    /// Per-day probability of a news event.
    #[arg(long, value_name = "P")]
    pub jump_probability: Option<f64>,

    /// Fractional next-day move an event causes.
    #[arg(long, value_name = "M")]
    pub jump_magnitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Huber,
    Mse,
}

impl From<LossArg> for LossKind {
    fn from(arg: LossArg) -> Self {
        match arg {
            LossArg::Huber => LossKind::Huber,
            LossArg::Mse => LossKind::Mse,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GranularityArg {
    Day,
    Hour,
}

impl From<GranularityArg> for Granularity {
    fn from(arg: GranularityArg) -> Self {
        match arg {
            GranularityArg::Day => Granularity::Day,
            GranularityArg::Hour => Granularity::Hour,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Text,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(arg: FormatArg) -> Self {
        match arg {
            FormatArg::Text => ReportFormat::Text,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests land on stdout with status 0; real
            // usage errors land on stderr with status 1.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

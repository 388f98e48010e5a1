//! Subcommand implementations.
//!
//! Shared conventions: inputs resolve flag first, then settings file, and
//! intermediate files default to the previous stage's output name inside
//! the output directory. Deterministic results print to stdout; progress
//! and file notices print to stderr. Every output file lands inside the
//! output directory under a fixed name.

use std::fs;
use std::path::{Path, PathBuf};

use augur_core::convlstm::{load_checkpoint, predict_series, PredictionSeries};
use augur_core::fusion::{
    emit_corpus, fit_surrogate, from_records_csv, time_map, to_records_csv,
};
use augur_core::metrics::{compare_report, compute_metrics, MetricReport, ReportFormat};
use augur_core::news::{parse_feed, ParsedFeed, SourceWeightRegistry};
use augur_core::pipeline::{
    lag_intervals, run_e2e, score_feed, train_price_model, window_length_performance, E2eConfig,
};
use augur_core::sentiment::{
    bucket_by_interval, from_scored_csv, to_scored_csv, Granularity, LexiconScorer, PipeScorer,
    SentimentPoint, SentimentScorer,
};
use augur_core::seqlen::search_optimal_length;
use augur_core::synth::{events_to_csv, generate};
use augur_core::timeseries::{load_ohlcv, OhlcvSeries};

use crate::config::{self, Settings};
use crate::{
    Cli, Command, E2eArgs, EmitCorpusArgs, EvaluateArgs, FindSeqlenArgs, FitSurrogateArgs,
    FuseArgs, IngestArgs, PredictArgs, ScoreNewsArgs, SynthArgs, TrainArgs,
};

pub type CmdError = Box<dyn std::error::Error + Send + Sync>;

pub fn run(cli: &Cli) -> Result<(), CmdError> {
    let settings = match &cli.config {
        Some(path) => config::load(path)?,
        None => Settings::default(),
    };
    let out_dir = cli.output_dir.as_ref().unwrap_or(&settings.output_dir).clone();
    match &cli.command {
        Command::Ingest(args) => ingest(args, &settings, &out_dir),
        Command::FindSeqlen(args) => find_seqlen(args, &settings, &out_dir),
        Command::Train(args) => train(args, &settings, &out_dir),
        Command::Predict(args) => predict(args, &settings, &out_dir),
        Command::ScoreNews(args) => score_news(args, &settings, &out_dir),
        Command::Fuse(args) => fuse(args, &settings, &out_dir),
        Command::EmitCorpus(args) => emit_corpus_cmd(args, &out_dir),
        Command::FitSurrogate(args) => fit_surrogate_cmd(args, &out_dir),
        Command::Evaluate(args) => evaluate(args),
        Command::Synth(args) => synth(args, &settings, &out_dir),
        Command::E2e(args) => e2e(args, &settings, &out_dir),
    }
}

/// Resolves a required input: explicit flag first, then the settings file.
fn require_input(
    flag: Option<&PathBuf>,
    fallback: Option<&PathBuf>,
    hint: &str,
) -> Result<PathBuf, CmdError> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| format!("missing input; pass {hint}").into())
}

/// Resolves an intermediate file: explicit flag first, then the producing
/// stage's default name inside the output directory.
fn stage_input(flag: Option<&PathBuf>, out_dir: &Path, default_name: &str) -> PathBuf {
    flag.cloned().unwrap_or_else(|| out_dir.join(default_name))
}

fn read_input(path: &Path) -> Result<String, CmdError> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()).into())
}

fn load_series(path: &Path) -> Result<OhlcvSeries, CmdError> {
    Ok(load_ohlcv(&read_input(path)?)?)
}

/// Writes one output file. `name` is a bare file name: everything the
/// binary produces stays inside the output directory.
fn write_out(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CmdError> {
    debug_assert!(!name.contains(['/', '\\']) && name != "..");
    fs::create_dir_all(out_dir)
        .map_err(|e| format!("cannot create output dir {}: {e}", out_dir.display()))?;
    let path = out_dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

fn ingest(args: &IngestArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let path = require_input(args.stock.as_ref(), s.stock_csv.as_ref(), "--stock or [paths] stock_csv")?;
    let series = load_series(&path)?;
    let (Some(first), Some(last)) = (series.dates().next(), series.dates().last()) else {
        return Err("stock CSV has no rows".into());
    };
    write_out(out, "ingested.csv", &series.to_csv())?;
    println!("rows={} first={first} last={last}", series.len());
    Ok(())
}

fn find_seqlen(args: &FindSeqlenArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let path = require_input(args.stock.as_ref(), s.stock_csv.as_ref(), "--stock or [paths] stock_csv")?;
    let series = load_series(&path)?;
    let mut search = s.search;
    if let Some(v) = args.initial_len {
        search.initial_len = v;
    }
    if let Some(v) = args.max_len {
        search.max_len = v;
    }
    let probe_epochs = args.probe_epochs.unwrap_or(s.probe_epochs);
    let train_fraction = args.train_fraction.unwrap_or(s.train_fraction);
    let evaluator = window_length_performance(&series, &s.model, probe_epochs, train_fraction);
    let outcome = search_optimal_length(evaluator, &search)?;
    for e in &outcome.trace.entries {
        eprintln!(
            "iter {} len {} perf {} step {} {}",
            e.iteration, e.len, e.performance, e.step, e.action
        );
    }
    write_out(out, "seqlen_trace.csv", &outcome.trace.to_csv())?;
    println!(
        "best_len={} performance={} evaluations={}",
        outcome.best_len, outcome.best_performance, outcome.evaluations
    );
    Ok(())
}

fn train(args: &TrainArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let path = require_input(args.stock.as_ref(), s.stock_csv.as_ref(), "--stock or [paths] stock_csv")?;
    let series = load_series(&path)?;
    let mut options = s.model.clone();
    if let Some(v) = args.window_len {
        options.window_len = v;
    }
    if let Some(v) = args.epochs {
        options.train.epochs = v;
    }
    if let Some(v) = args.seed {
        options.train.seed = v;
    }
    if let Some(v) = args.loss {
        options.train.loss = v.into();
    }
    let (model, history) = train_price_model(&series, &options, series.len())?;
    let mut loss_csv = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        eprintln!("epoch {} loss {loss}", i + 1);
        loss_csv.push_str(&format!("{},{loss}\n", i + 1));
    }
    write_out(out, "loss_history.csv", &loss_csv)?;
    write_out(out, "model.json", &model.to_json())?;
    let final_loss = history.last().copied().unwrap_or(f64::NAN);
    println!("epochs={} final_loss={final_loss}", history.len());
    Ok(())
}

fn predict(args: &PredictArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let model_path = stage_input(args.model.as_ref(), out, "model.json");
    let model = load_checkpoint::<f64>(&model_path)?;
    let stock = require_input(args.stock.as_ref(), s.stock_csv.as_ref(), "--stock or [paths] stock_csv")?;
    let series = load_series(&stock)?;
    let predictions = predict_series(&model, &series)?;
    write_out(out, "predictions.csv", &predictions.to_csv())?;
    println!("predictions={}", predictions.points.len());
    Ok(())
}

#[cfg(feature = "fetch")]
fn load_feed(args: &ScoreNewsArgs, s: &Settings) -> Result<ParsedFeed, CmdError> {
    if let Some(url) = &args.fetch_url {
        let key = std::env::var("AUGUR_NEWS_API_KEY").ok();
        return Ok(augur_core::news::fetch_feed(url, key.as_deref())?);
    }
    load_feed_file(args, s)
}

#[cfg(not(feature = "fetch"))]
fn load_feed(args: &ScoreNewsArgs, s: &Settings) -> Result<ParsedFeed, CmdError> {
    load_feed_file(args, s)
}

fn load_feed_file(args: &ScoreNewsArgs, s: &Settings) -> Result<ParsedFeed, CmdError> {
    let path = require_input(args.news.as_ref(), s.news_json.as_ref(), "--news or [paths] news_json")?;
    Ok(parse_feed(&read_input(&path)?)?)
}

fn score_news(args: &ScoreNewsArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let feed = load_feed(args, s)?;
    let default_weight = args.default_weight.unwrap_or(s.default_weight);
    let registry = match args.sources.as_ref().or(s.sources_tsv.as_ref()) {
        Some(path) => SourceWeightRegistry::from_tsv(&read_input(path)?, default_weight)?,
        None => SourceWeightRegistry::builtin(default_weight)?,
    };
    let mut scorer: Box<dyn SentimentScorer> =
        match (&args.scorer_cmd, args.lexicon.as_ref().or(s.lexicon_tsv.as_ref())) {
            (Some(cmd), _) => Box::new(PipeScorer::spawn(cmd, &args.scorer_arg)?),
            (None, Some(path)) => Box::new(LexiconScorer::from_tsv(&read_input(path)?)?),
            (None, None) => Box::new(LexiconScorer::builtin()),
        };
    let scored = score_feed(&feed, scorer.as_mut(), &registry)?;
    write_out(out, "scored.csv", &to_scored_csv(&scored))?;
    println!("scored={} skipped={}", scored.len(), feed.skipped);
    Ok(())
}

fn fuse(args: &FuseArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let predictions_path = stage_input(args.predictions.as_ref(), out, "predictions.csv");
    let predictions = PredictionSeries::from_csv(&read_input(&predictions_path)?)?;
    let scored_path = stage_input(args.scored.as_ref(), out, "scored.csv");
    let scored = from_scored_csv(&read_input(&scored_path)?)?;
    let stock = require_input(args.stock.as_ref(), s.stock_csv.as_ref(), "--stock or [paths] stock_csv")?;
    let series = load_series(&stock)?;

    let points: Vec<SentimentPoint> = scored.iter().map(SentimentPoint::from).collect();
    let granularity = args.granularity.map(Granularity::from).unwrap_or(s.granularity);
    let intervals = bucket_by_interval(&points, granularity)?;
    let lagged = lag_intervals(&intervals, args.lag_days.unwrap_or(s.news_lag_days));
    let records = time_map(&predictions, &lagged, &series)?;
    let with_actual = records.iter().filter(|r| r.actual.is_some()).count();
    write_out(out, "records.csv", &to_records_csv(&records))?;
    println!("records={} with_actual={with_actual}", records.len());
    Ok(())
}

fn emit_corpus_cmd(args: &EmitCorpusArgs, out: &Path) -> Result<(), CmdError> {
    let path = stage_input(args.records.as_ref(), out, "records.csv");
    let records = from_records_csv(&read_input(&path)?)?;
    let total = records.len();
    // Records without a known actual cannot become training examples.
    let usable: Vec<_> = records.into_iter().filter(|r| r.actual.is_some()).collect();
    let corpus = emit_corpus(&usable)?;
    write_out(out, "corpus.jsonl", &corpus)?;
    println!("examples={} skipped_missing_actual={}", usable.len(), total - usable.len());
    Ok(())
}

fn fit_surrogate_cmd(args: &FitSurrogateArgs, out: &Path) -> Result<(), CmdError> {
    let path = stage_input(args.records.as_ref(), out, "records.csv");
    let records = from_records_csv(&read_input(&path)?)?;
    let model = fit_surrogate(&records)?;
    let json = serde_json::to_string_pretty(&model).expect("surrogate serializes") + "\n";
    write_out(out, "surrogate.json", &json)?;
    println!(
        "a={} b={} c={} residual_mse={} n={}",
        model.a, model.b, model.c, model.residual_mse, model.n
    );
    Ok(())
}

/// Pairs each prediction with the actual close on its date. A prediction
/// dated outside the actual series is a data error, not a silent drop.
fn align(series: &OhlcvSeries, predictions: &PredictionSeries) -> Result<(Vec<f64>, Vec<f64>), CmdError> {
    let mut actual = Vec::with_capacity(predictions.points.len());
    let mut predicted = Vec::with_capacity(predictions.points.len());
    for p in &predictions.points {
        let close = series
            .close_on(p.date)
            .ok_or_else(|| format!("no actual close for {}", p.date))?;
        actual.push(close);
        predicted.push(p.value);
    }
    Ok((actual, predicted))
}

fn render_report(r: &MetricReport<f64>, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => format!(
            "MAE   {}\nMSE   {}\nRMSE  {}\nMAPE  {}\nn     {}\n",
            r.mae, r.mse, r.rmse, r.mape, r.n
        ),
        ReportFormat::Csv => format!(
            "metric,value\nmae,{}\nmse,{}\nrmse,{}\nmape,{}\nn,{}\n",
            r.mae, r.mse, r.rmse, r.mape, r.n
        ),
    }
}

fn evaluate(args: &EvaluateArgs) -> Result<(), CmdError> {
    let series = load_series(&args.actual)?;
    let predicted = PredictionSeries::from_csv(&read_input(&args.predicted)?)?;
    let (actual, values) = align(&series, &predicted)?;
    let report = compute_metrics(&actual, &values)?;
    let format = ReportFormat::from(args.format);
    let rendered = match &args.baseline {
        None => render_report(&report, format),
        Some(path) => {
            let baseline = PredictionSeries::from_csv(&read_input(path)?)?;
            let (actual_b, values_b) = align(&series, &baseline)?;
            let baseline_report = compute_metrics(&actual_b, &values_b)?;
            compare_report(&baseline_report, &report, format)?
        }
    };
    print!("{rendered}");
    if !rendered.ends_with('\n') {
        println!();
    }
    Ok(())
}

fn synth(args: &SynthArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let mut cfg = s.synth.clone();
    if let Some(v) = args.days {
        cfg.days = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.base_price {
        cfg.base_price = v;
    }
    if let Some(v) = args.volatility {
        cfg.volatility = v;
    }
    if let Some(v) = args.jump_probability {
        cfg.jump_probability = v;
    }
    if let Some(v) = args.jump_magnitude {
        cfg.jump_magnitude = v;
    }
    if let Some(v) = args.articles_min {
        cfg.articles_min = v;
    }
    if let Some(v) = args.articles_max {
        cfg.articles_max = v;
    }
    if let Some(v) = args.start_date {
        cfg.start_date = v;
    }
    let output = generate(&cfg)?;
    let articles = parse_feed(&output.feed_json)?.articles.len();
    write_out(out, "stock.csv", &output.series.to_csv())?;
    write_out(out, "feed.json", &output.feed_json)?;
    write_out(out, "events.csv", &events_to_csv(&output.events))?;
    println!(
        "days={} events={} articles={articles}",
        output.series.len(),
        output.events.len()
    );
    Ok(())
}

fn e2e(args: &E2eArgs, s: &Settings, out: &Path) -> Result<(), CmdError> {
    let mut cfg = E2eConfig {
        synth: s.synth.clone(),
        model: s.model.clone(),
        train_fraction: s.train_fraction,
        news_lag_days: s.news_lag_days,
        granularity: s.granularity,
        default_weight: s.default_weight,
    };
    if let Some(v) = args.seed {
        cfg.synth.seed = v;
        cfg.model.train.seed = v;
    }
    if let Some(v) = args.days {
        cfg.synth.days = v;
    }
    if let Some(v) = args.epochs {
        cfg.model.train.epochs = v;
    }
    if let Some(v) = args.window_len {
        cfg.model.window_len = v;
    }
    if let Some(v) = args.train_fraction {
        cfg.train_fraction = v;
    }
    if let Some(v) = args.volatility {
        cfg.synth.volatility = v;
    }
    if let Some(v) = args.jump_probability {
        cfg.synth.jump_probability = v;
    }
    if let Some(v) = args.jump_magnitude {
        cfg.synth.jump_magnitude = v;
    }
    let outcome = run_e2e(&cfg)?;
    let mut report = outcome.report_text.clone();
    if !report.ends_with('\n') {
        report.push('\n');
    }
    print!("{report}");
    println!(
        "train_records={} test_records={} events={} improvement_pct={}",
        outcome.train_records, outcome.test_records, outcome.events, outcome.mae_improvement_pct
    );
    write_out(out, "report.txt", &report)?;
    let surrogate = serde_json::to_string_pretty(&outcome.surrogate).expect("surrogate serializes") + "\n";
    write_out(out, "surrogate.json", &surrogate)?;
    Ok(())
}

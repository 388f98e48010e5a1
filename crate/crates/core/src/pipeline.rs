//! End-to-end orchestration: the glue the CLI and the acceptance tests
//! share.
//!
//! The hybrid protocol is fixed here in one place. A price model is trained
//! on the leading fraction of the series (normalization is fitted on that
//! region only, so nothing from the test region leaks in). Articles are
//! scored, weighted, bucketed per day, then shifted forward by
//! `news_lag_days` before the join: generated events put the articles on the
//! day BEFORE the price move, so yesterday's news is what informs today's
//! record. The fusion model is fit on training-region records only and both
//! it and the raw forecasts are evaluated on the held-out tail.

use chrono::Duration;
use thiserror::Error;

use crate::convlstm::{
    forward, loss_huber, loss_mse, predict_series, train, ConvLstmError, ConvLstmModel, LossKind,
    TrainConfig,
};
use crate::fusion::{
    fit_surrogate, surrogate_predict, time_map, FusionError, FusionRecord, SurrogateModel,
};
use crate::metrics::{compare_report, compute_metrics, MetricReport, MetricsError, ReportFormat};
use crate::news::{parse_feed, prepare_text, NewsError, ParsedFeed, SourceWeightRegistry};
use crate::sentiment::{
    bucket_by_interval, Granularity, LexiconScorer, ScoredArticle, SentimentError, SentimentInterval,
    SentimentPoint, SentimentScorer,
};
use crate::seqlen::EvalError;
use crate::synth::{generate, SynthConfig, SynthError};
use crate::timeseries::{
    feature_matrix, make_windows, zscore_apply, zscore_fit, FeatureColumn, OhlcvSeries,
    TimeseriesError,
};

/// Errors from any pipeline stage.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad pipeline config: {reason}")]
    BadConfig { reason: String },

    #[error("series too short: {reason}")]
    TooShort { reason: String },

    #[error(transparent)]
    Timeseries(#[from] TimeseriesError),

    #[error(transparent)]
    Model(#[from] ConvLstmError),

    #[error(transparent)]
    News(#[from] NewsError),

    #[error(transparent)]
    Sentiment(#[from] SentimentError),

    #[error(transparent)]
    Fusion(#[from] FusionError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Everything needed to shape and train one price model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    pub features: Vec<FeatureColumn>,
    /// Index of the prediction target within `features`.
    pub target_col: usize,
    pub window_len: usize,
    pub filters: usize,
    pub kernel_width: usize,
    pub train: TrainConfig<f64>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            features: vec![FeatureColumn::Close, FeatureColumn::Volume],
            target_col: 0,
            window_len: 5,
            filters: 8,
            kernel_width: 3,
            train: TrainConfig::default(),
        }
    }
}

/// Trains a model on the first `train_rows` rows of the series.
///
/// Normalization is fitted on those rows alone; windows whose target falls
/// at or beyond `train_rows` are excluded from training. Pass
/// `series.len()` to train on everything.
pub fn train_price_model(
    series: &OhlcvSeries,
    options: &ModelOptions,
    train_rows: usize,
) -> Result<(ConvLstmModel<f64>, Vec<f64>), PipelineError> {
    if train_rows > series.len() {
        return Err(PipelineError::BadConfig {
            reason: format!("train_rows {} exceeds series length {}", train_rows, series.len()),
        });
    }
    let geometry = crate::convlstm::Geometry::new(
        options.features.len(),
        options.filters,
        options.kernel_width,
    )?;
    let matrix = feature_matrix::<f64>(series, &options.features);
    let norm = zscore_fit(&matrix[..train_rows])?;
    let normalized = zscore_apply(&matrix, &norm)?;
    let mut dataset = make_windows(&normalized, options.window_len, 1, 1, options.target_col)?;
    dataset.windows.retain(|w| w.target_row < train_rows);
    let (params, history) = train(&dataset, geometry, &options.train)?;
    let model = ConvLstmModel::new(
        params,
        norm,
        options.features.clone(),
        options.target_col,
        options.window_len,
        options.train,
    )?;
    Ok((model, history))
}

/// Scores every article in a feed and attaches its source weight.
pub fn score_feed(
    feed: &ParsedFeed,
    scorer: &mut dyn SentimentScorer,
    registry: &SourceWeightRegistry,
) -> Result<Vec<ScoredArticle>, PipelineError> {
    feed.articles
        .iter()
        .map(|article| {
            let label = scorer.score(&prepare_text(article))?;
            let weight = registry.weight(&article.source_name);
            Ok(ScoredArticle::new(article.clone(), label, weight)?)
        })
        .collect()
}

/// Buckets scored articles into cumulative per-interval scores.
pub fn sentiment_intervals(
    scored: &[ScoredArticle],
    granularity: Granularity,
) -> Result<Vec<SentimentInterval>, PipelineError> {
    let points: Vec<SentimentPoint> = scored.iter().map(SentimentPoint::from).collect();
    Ok(bucket_by_interval(&points, granularity)?)
}

/// Shifts sentiment intervals forward so news from day d informs day
/// d + lag. The join itself stays a plain same-date inner join.
pub fn lag_intervals(intervals: &[SentimentInterval], lag_days: i64) -> Vec<SentimentInterval> {
    let shift = Duration::days(lag_days);
    intervals
        .iter()
        .map(|iv| SentimentInterval { start: iv.start + shift, end: iv.end + shift, ..*iv })
        .collect()
}

/// Mean validation loss of a trained model over held-out windows, as a
/// black-box performance evaluator for the window-length search: higher is
/// better, so the loss is negated.
///
/// The returned closure trains a short-budget model per probed length; the
/// search memoizes, so each length is evaluated once.
pub fn window_length_performance<'a>(
    series: &'a OhlcvSeries,
    options: &'a ModelOptions,
    probe_epochs: usize,
    train_fraction: f64,
) -> impl FnMut(usize) -> Result<f64, EvalError> + 'a {
    move |window_len: usize| {
        let mut opts = options.clone();
        opts.window_len = window_len;
        opts.train.epochs = probe_epochs;
        let train_rows = split_point(series.len(), train_fraction);

        let (model, _) = train_price_model(series, &opts, train_rows)?;
        let matrix = feature_matrix::<f64>(series, &opts.features);
        let normalized = zscore_apply(&matrix, &model.norm).map_err(PipelineError::from)?;
        let dataset = make_windows(&normalized, window_len, 1, 1, opts.target_col)
            .map_err(PipelineError::from)?;

        let mut actuals = Vec::new();
        let mut preds = Vec::new();
        for window in dataset.windows.iter().filter(|w| w.target_row >= train_rows) {
            actuals.push(window.target);
            preds.push(forward(&window.input, &model.params).map_err(PipelineError::from)?);
        }
        if actuals.is_empty() {
            return Err(Box::new(PipelineError::TooShort {
                reason: format!("no validation windows at length {window_len}"),
            }) as EvalError);
        }
        let loss = match opts.train.loss {
            LossKind::Huber => loss_huber(&actuals, &preds, opts.train.huber_delta),
            LossKind::Mse => loss_mse(&actuals, &preds),
        }
        .map_err(PipelineError::from)?;
        Ok(-loss)
    }
}

fn split_point(len: usize, train_fraction: f64) -> usize {
    ((len as f64) * train_fraction).floor() as usize
}

/// Full-run parameters. Defaults: the synth and model defaults, an 80/20
/// split, daily buckets, one day of news lag, default source weight 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct E2eConfig {
    pub synth: SynthConfig,
    pub model: ModelOptions,
    pub train_fraction: f64,
    pub news_lag_days: i64,
    pub granularity: Granularity,
    pub default_weight: f64,
}

impl Default for E2eConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            model: ModelOptions::default(),
            train_fraction: 0.8,
            news_lag_days: 1,
            granularity: Granularity::Day,
            default_weight: 0.5,
        }
    }
}

impl E2eConfig {
    fn validate(&self) -> Result<(), PipelineError> {
        let bad = |reason: String| PipelineError::BadConfig { reason };
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(bad(format!("train fraction {} not in (0, 1)", self.train_fraction)));
        }
        if !(0..=30).contains(&self.news_lag_days) {
            return Err(bad(format!("news lag {} days not in [0, 30]", self.news_lag_days)));
        }
        if !(self.default_weight > 0.0 && self.default_weight <= 1.0) {
            return Err(bad(format!("default weight {} not in (0, 1]", self.default_weight)));
        }
        Ok(())
    }
}

/// What one end-to-end run produced.
#[derive(Debug, Clone)]
pub struct E2eOutcome {
    pub baseline: MetricReport<f64>,
    pub hybrid: MetricReport<f64>,
    /// 100 * (baseline MAE - hybrid MAE) / baseline MAE.
    pub mae_improvement_pct: f64,
    pub surrogate: SurrogateModel,
    /// Comparison table, text format.
    pub report_text: String,
    pub train_records: usize,
    pub test_records: usize,
    pub events: usize,
}

/// Runs the whole hybrid pipeline on generated data and scores both models
/// on the held-out tail. Deterministic: a config (seeds included) fixes
/// every output byte.
pub fn run_e2e(config: &E2eConfig) -> Result<E2eOutcome, PipelineError> {
    config.validate()?;
    let synth = generate(&config.synth)?;
    let series = &synth.series;
    let train_rows = split_point(series.len(), config.train_fraction);
    if train_rows < config.model.window_len + 2 || train_rows >= series.len() {
        return Err(PipelineError::TooShort {
            reason: format!(
                "{} days split at {} cannot cover window {} plus a test tail",
                series.len(),
                train_rows,
                config.model.window_len
            ),
        });
    }

    let (model, _history) = train_price_model(series, &config.model, train_rows)?;
    let predictions = predict_series(&model, series)?;

    let feed = parse_feed(&synth.feed_json)?;
    let mut scorer = LexiconScorer::builtin();
    let registry = SourceWeightRegistry::builtin(config.default_weight)?;
    let scored = score_feed(&feed, &mut scorer, &registry)?;
    let intervals = sentiment_intervals(&scored, config.granularity)?;
    let lagged = lag_intervals(&intervals, config.news_lag_days);

    let records = time_map(&predictions, &lagged, series)?;
    let split_date = series.rows()[train_rows].date;
    let (train_recs, test_recs): (Vec<FusionRecord>, Vec<FusionRecord>) =
        records.into_iter().partition(|r| r.date < split_date);
    if test_recs.is_empty() {
        return Err(PipelineError::TooShort {
            reason: "no fused records fall in the test region".to_string(),
        });
    }

    let surrogate = fit_surrogate(&train_recs)?;

    let mut actuals = Vec::with_capacity(test_recs.len());
    let mut baseline_preds = Vec::with_capacity(test_recs.len());
    let mut hybrid_preds = Vec::with_capacity(test_recs.len());
    for record in &test_recs {
        let actual = record.actual.ok_or(FusionError::MissingActual { date: record.date })?;
        actuals.push(actual);
        baseline_preds.push(record.lstm_prediction);
        hybrid_preds.push(surrogate_predict(&surrogate, record.lstm_prediction, record.w_cs));
    }
    let baseline = compute_metrics(&actuals, &baseline_preds)?;
    let hybrid = compute_metrics(&actuals, &hybrid_preds)?;
    let mae_improvement_pct = if baseline.mae == hybrid.mae {
        0.0
    } else {
        100.0 * (baseline.mae - hybrid.mae) / baseline.mae
    };
    let report_text = compare_report(&baseline, &hybrid, ReportFormat::Text)?;

    Ok(E2eOutcome {
        baseline,
        hybrid,
        mae_improvement_pct,
        surrogate,
        report_text,
        train_records: train_recs.len(),
        test_records: test_recs.len(),
        events: synth.events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Utc};

    fn small_config(seed: u64) -> E2eConfig {
        let mut cfg = E2eConfig::default();
        cfg.synth.days = 120;
        cfg.synth.seed = seed;
        cfg.model.train.seed = seed;
        cfg.model.train.epochs = 12;
        cfg
    }

    #[test]
    fn lagging_shifts_interval_bounds_only() {
        let start: DateTime<Utc> = "2021-03-01T00:00:00Z".parse().unwrap();
        let iv = SentimentInterval {
            start,
            end: start + Duration::days(1),
            w_cs: 0.25,
            article_count: 3,
        };
        let lagged = lag_intervals(&[iv], 1);
        assert_eq!(lagged[0].start, start + Duration::days(1));
        assert_eq!(lagged[0].end, start + Duration::days(2));
        assert_eq!(lagged[0].w_cs, 0.25);
        assert_eq!(lagged[0].article_count, 3);
        // zero lag is the identity
        assert_eq!(lag_intervals(&[iv], 0)[0], iv);
    }

    #[test]
    fn normalization_is_fit_on_the_training_region_only() {
        let out = generate(&SynthConfig { days: 60, ..SynthConfig::default() }).unwrap();
        let options = ModelOptions { train: TrainConfig { epochs: 2, ..TrainConfig::default() }, ..ModelOptions::default() };
        let (model, _) = train_price_model(&out.series, &options, 40).unwrap();
        let matrix = feature_matrix::<f64>(&out.series, &options.features);
        let expected = zscore_fit(&matrix[..40]).unwrap();
        assert_eq!(model.norm.mu, expected.mu);
        assert_eq!(model.norm.sigma, expected.sigma);
    }

    #[test]
    fn e2e_produces_a_complete_outcome() {
        let outcome = run_e2e(&small_config(5)).unwrap();
        assert!(outcome.baseline.mae.is_finite() && outcome.baseline.mae > 0.0);
        assert!(outcome.hybrid.mae.is_finite() && outcome.hybrid.mae > 0.0);
        assert!(outcome.test_records > 0);
        assert!(outcome.train_records > outcome.test_records);
        assert!(outcome.report_text.contains("MAE"));
        assert!(outcome.report_text.contains("MAPE"));
        assert_eq!(outcome.baseline.n, outcome.test_records);
    }

    #[test]
    fn e2e_is_deterministic_end_to_end() {
        let a = run_e2e(&small_config(9)).unwrap();
        let b = run_e2e(&small_config(9)).unwrap();
        assert_eq!(a.report_text, b.report_text);
        assert_eq!(a.surrogate.a.to_bits(), b.surrogate.a.to_bits());
        assert_eq!(a.surrogate.b.to_bits(), b.surrogate.b.to_bits());
        assert_eq!(a.surrogate.c.to_bits(), b.surrogate.c.to_bits());
        assert_eq!(a.baseline.mae.to_bits(), b.baseline.mae.to_bits());
        assert_eq!(a.hybrid.mae.to_bits(), b.hybrid.mae.to_bits());
    }

    #[test]
    fn hybrid_beats_baseline_on_a_moderate_run() {
        let mut cfg = E2eConfig::default();
        cfg.synth.days = 300;
        cfg.synth.seed = 42;
        cfg.model.train.epochs = 30;
        let outcome = run_e2e(&cfg).unwrap();
        assert!(
            outcome.mae_improvement_pct > 0.0,
            "expected the sentiment signal to help: {}",
            outcome.report_text
        );
    }

    #[test]
    fn window_length_evaluator_is_deterministic_and_finite() {
        let out = generate(&SynthConfig { days: 80, ..SynthConfig::default() }).unwrap();
        let options = ModelOptions::default();
        let mut eval = window_length_performance(&out.series, &options, 4, 0.8);
        let a = eval(6).unwrap();
        let b = eval(6).unwrap();
        assert!(a.is_finite());
        assert!(a <= 0.0, "negated loss is non-positive, got {a}");
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn bad_e2e_configs_are_rejected() {
        let mut fraction = E2eConfig::default();
        fraction.train_fraction = 1.0;
        assert!(matches!(run_e2e(&fraction).unwrap_err(), PipelineError::BadConfig { .. }));

        let mut lag = E2eConfig::default();
        lag.news_lag_days = -1;
        assert!(matches!(run_e2e(&lag).unwrap_err(), PipelineError::BadConfig { .. }));

        let mut tiny = E2eConfig::default();
        tiny.synth.days = 6;
        assert!(matches!(run_e2e(&tiny).unwrap_err(), PipelineError::TooShort { .. }));
    }
}

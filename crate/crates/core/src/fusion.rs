//! Fusing forecasts with sentiment.
//!
//! Predictions and sentiment intervals are joined date-by-date (an inner
//! join, so the older prediction surplus is dropped when news coverage is
//! shorter, and days without news are never imputed). The fused records are
//! emitted two ways: a byte-reproducible JSONL fine-tuning corpus for an
//! out-of-band sequence-to-sequence model, and a small ordinary-least-squares
//! fusion model fit right here, used to quantify what the sentiment signal
//! adds. All operations are pure.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convlstm::PredictionSeries;
use crate::sentiment::SentimentInterval;
use crate::timeseries::OhlcvSeries;

/// Errors from joining, emitting, and fitting.
#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no overlapping intervals between predictions and sentiment")]
    NoOverlap,

    #[error("multiple sentiment intervals fall on {date}; daily records need daily buckets")]
    DuplicateBucket { date: NaiveDate },

    #[error("sentiment score {value} on {date} lies outside [-1, 1]")]
    BadScore { date: NaiveDate, value: f64 },

    #[error("record on {date} has no actual value")]
    MissingActual { date: NaiveDate },

    #[error("need at least 3 records with actuals to fit, got {n}")]
    TooFewRecords { n: usize },

    #[error("cannot fit: the {column} column is constant")]
    RankDeficient { column: &'static str },

    #[error("cannot fit: design matrix is singular")]
    Singular,

    #[error("records csv line {line}: {reason}")]
    RecordsCsv { line: usize, reason: String },

    #[error("corpus line {line}: {reason}")]
    Template { line: usize, reason: String },
}

/// One joined observation: the forecast for a date, the cumulative sentiment
/// for the same date, and (when known) the realized close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRecord {
    pub date: NaiveDate,
    pub lstm_prediction: f64,
    pub w_cs: f64,
    pub actual: Option<f64>,
}

/// Inner-joins predictions and daily sentiment intervals on date, attaching
/// the actual close where the price series has that date. Output is sorted
/// ascending and every emitted record has both a forecast and a sentiment
/// score; an empty intersection is an error.
pub fn time_map(
    predictions: &PredictionSeries,
    sentiments: &[SentimentInterval],
    actuals: &OhlcvSeries,
) -> Result<Vec<FusionRecord>, FusionError> {
    let mut by_date: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for interval in sentiments {
        let date = interval.start.date_naive();
        if !(interval.w_cs.is_finite() && (-1.0..=1.0).contains(&interval.w_cs)) {
            return Err(FusionError::BadScore { date, value: interval.w_cs });
        }
        if by_date.insert(date, interval.w_cs).is_some() {
            return Err(FusionError::DuplicateBucket { date });
        }
    }

    let mut records: Vec<FusionRecord> = predictions
        .points
        .iter()
        .filter_map(|point| {
            by_date.get(&point.date).map(|&w_cs| FusionRecord {
                date: point.date,
                lstm_prediction: point.value,
                w_cs,
                actual: actuals.close_on(point.date),
            })
        })
        .collect();
    if records.is_empty() {
        return Err(FusionError::NoOverlap);
    }
    records.sort_by_key(|r| r.date);
    Ok(records)
}

/// One fine-tuning example: the serialized input and target strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusExample {
    pub text: String,
    pub target: String,
}

impl CorpusExample {
    fn from_record(record: &FusionRecord) -> Result<Self, FusionError> {
        let actual = record.actual.ok_or(FusionError::MissingActual { date: record.date })?;
        Ok(Self {
            text: format!(
                "LSTM prediction {:.4} and sentiment score {:.4}",
                record.lstm_prediction, record.w_cs
            ),
            target: format!("actual target {actual:.4}"),
        })
    }
}

/// Builds the fine-tuning examples, one per record, in record order.
pub fn corpus_examples(records: &[FusionRecord]) -> Result<Vec<CorpusExample>, FusionError> {
    records.iter().map(CorpusExample::from_record).collect()
}

/// Serializes records as the fine-tuning corpus: one JSON object per line
/// with exactly the keys `text` and `target`, LF endings, trailing newline.
///
/// The byte layout is canonical (golden-file tested); the strings contain
/// nothing needing JSON escapes, so the lines are assembled directly.
pub fn emit_corpus(records: &[FusionRecord]) -> Result<String, FusionError> {
    let mut out = String::new();
    for example in corpus_examples(records)? {
        out.push_str("{\"text\": \"");
        out.push_str(&example.text);
        out.push_str("\", \"target\": \"");
        out.push_str(&example.target);
        out.push_str("\"}\n");
    }
    Ok(out)
}

/// Extracts (prediction, sentiment, actual) from corpus JSONL by the inverse
/// of the emit template.
pub fn parse_corpus(jsonl: &str) -> Result<Vec<(f64, f64, f64)>, FusionError> {
    let mut out = Vec::new();
    for (idx, line) in jsonl.lines().enumerate() {
        let line_no = idx + 1;
        let bad = |reason: String| FusionError::Template { line: line_no, reason };
        let doc: serde_json::Value =
            serde_json::from_str(line).map_err(|e| bad(format!("not JSON: {e}")))?;
        let obj = doc.as_object().ok_or_else(|| bad("not a JSON object".to_string()))?;
        if obj.len() != 2 {
            return Err(bad(format!("expected exactly 2 keys, got {}", obj.len())));
        }
        let text = obj
            .get("text")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing `text` string".to_string()))?;
        let target = obj
            .get("target")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing `target` string".to_string()))?;

        let rest = text
            .strip_prefix("LSTM prediction ")
            .ok_or_else(|| bad(format!("text does not match template: {text:?}")))?;
        let (p_text, s_text) = rest
            .split_once(" and sentiment score ")
            .ok_or_else(|| bad(format!("text does not match template: {text:?}")))?;
        let v_text = target
            .strip_prefix("actual target ")
            .ok_or_else(|| bad(format!("target does not match template: {target:?}")))?;
        let parse = |s: &str, what: &str| {
            s.parse::<f64>().map_err(|_| bad(format!("unparseable {what} {s:?}")))
        };
        out.push((parse(p_text, "prediction")?, parse(s_text, "sentiment")?, parse(v_text, "target")?));
    }
    Ok(out)
}

/// Linear fusion model: fused = a*p + b*s + c, with in-sample diagnostics.
/// A runnable stand-in for fine-tuning a sequence model on the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    /// Per-unit coefficient on the forecast.
    pub a: f64,
    /// Price units per unit of sentiment.
    pub b: f64,
    /// Intercept in price units.
    pub c: f64,
    /// Mean squared residual on the fitting data.
    pub residual_mse: f64,
    /// Number of records fit.
    pub n: usize,
}

/// Solves the 3x3 system `m * x = rhs` by Gaussian elimination with partial
/// pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Result<[f64; 3], FusionError> {
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1.0);
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).expect("finite"))
            .expect("non-empty range");
        if m[pivot_row][col].abs() < scale * 1e-12 {
            return Err(FusionError::Singular);
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in (col + 1)..3 {
            let factor = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Ok(x)
}

/// Fits actual ~ a*p + b*s + c by ordinary least squares over the records
/// that carry actuals, via the normal equations in double precision.
/// Constant regressor columns are rejected by name.
pub fn fit_surrogate(records: &[FusionRecord]) -> Result<SurrogateModel, FusionError> {
    let rows: Vec<(f64, f64, f64)> = records
        .iter()
        .filter_map(|r| r.actual.map(|y| (r.lstm_prediction, r.w_cs, y)))
        .collect();
    let n = rows.len();
    if n < 3 {
        return Err(FusionError::TooFewRecords { n });
    }
    for (extract, column) in [
        ((|r: &(f64, f64, f64)| r.0) as fn(&(f64, f64, f64)) -> f64, "prediction"),
        (|r: &(f64, f64, f64)| r.1, "sentiment"),
    ] {
        let first = extract(&rows[0]);
        if rows.iter().all(|r| extract(r) == first) {
            return Err(FusionError::RankDeficient { column });
        }
    }

    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(p, s, y) in &rows {
        let x = [p, s, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += x[i] * x[j];
            }
            rhs[i] += x[i] * y;
        }
    }
    let [a, b, c] = solve3(m, rhs)?;
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(FusionError::Singular);
    }

    let residual_mse = rows
        .iter()
        .map(|&(p, s, y)| {
            let e = y - (a * p + b * s + c);
            e * e
        })
        .sum::<f64>()
        / n as f64;
    Ok(SurrogateModel { a, b, c, residual_mse, n })
}

/// Applies the fitted model: a*p + b*s + c.
pub fn surrogate_predict(model: &SurrogateModel, p: f64, s: f64) -> f64 {
    model.a * p + model.b * s + model.c
}

/// Renders records as `date,lstm_pred,w_cs,actual` CSV; a missing actual is
/// an empty field.
pub fn to_records_csv(records: &[FusionRecord]) -> String {
    let mut out = String::from("date,lstm_pred,w_cs,actual\n");
    for r in records {
        let actual = r.actual.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.date, r.lstm_prediction, r.w_cs, actual));
    }
    out
}

/// Parses the CSV written by [`to_records_csv`].
pub fn from_records_csv(text: &str) -> Result<Vec<FusionRecord>, FusionError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "date,lstm_pred,w_cs,actual")) => {}
        _ => {
            return Err(FusionError::RecordsCsv {
                line: 1,
                reason: "expected header `date,lstm_pred,w_cs,actual`".to_string(),
            })
        }
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let bad = |reason: String| FusionError::RecordsCsv { line, reason };
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", fields.len())));
        }
        let date: NaiveDate =
            fields[0].parse().map_err(|_| bad(format!("bad date {:?}", fields[0])))?;
        let lstm_prediction: f64 =
            fields[1].parse().map_err(|_| bad(format!("bad prediction {:?}", fields[1])))?;
        let w_cs: f64 =
            fields[2].parse().map_err(|_| bad(format!("bad sentiment {:?}", fields[2])))?;
        if !(w_cs.is_finite() && (-1.0..=1.0).contains(&w_cs)) {
            return Err(bad(format!("sentiment {w_cs} outside [-1, 1]")));
        }
        let actual = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse().map_err(|_| bad(format!("bad actual {:?}", fields[3])))?)
        };
        records.push(FusionRecord { date, lstm_prediction, w_cs, actual });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convlstm::PredictionPoint;
    use crate::timeseries::{load_ohlcv, OhlcvSeries};
    use chrono::{DateTime, Utc};
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn predictions(days: &[(&str, f64)]) -> PredictionSeries {
        PredictionSeries {
            points: days
                .iter()
                .map(|&(d, v)| PredictionPoint { date: date(d), value: v })
                .collect(),
        }
    }

    fn interval(day: &str, w_cs: f64) -> SentimentInterval {
        let start: DateTime<Utc> = format!("{day}T00:00:00Z").parse().unwrap();
        SentimentInterval { start, end: start + chrono::Duration::days(1), w_cs, article_count: 1 }
    }

    fn series(days: &[(&str, f64)]) -> OhlcvSeries {
        let mut csv = String::from("date,open,high,low,close,adj_close,volume\n");
        for &(d, close) in days {
            csv.push_str(&format!("{d},{close},{close},{close},{close},{close},1000\n"));
        }
        load_ohlcv(&csv).unwrap()
    }

    fn record(day: &str, p: f64, s: f64, actual: Option<f64>) -> FusionRecord {
        FusionRecord { date: date(day), lstm_prediction: p, w_cs: s, actual }
    }

    #[test]
    fn join_keeps_the_most_recent_overlap() {
        let preds = predictions(&[
            ("2021-03-01", 10.0),
            ("2021-03-02", 11.0),
            ("2021-03-03", 12.0),
            ("2021-03-04", 13.0),
            ("2021-03-05", 14.0),
        ]);
        let sents = vec![
            interval("2021-03-03", 0.1),
            interval("2021-03-04", 0.2),
            interval("2021-03-05", 0.3),
        ];
        let acts = series(&[("2021-03-03", 12.5), ("2021-03-04", 13.5), ("2021-03-05", 14.5)]);
        let records = time_map(&preds, &sents, &acts).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].date, date("2021-03-03"));
        assert_eq!(records[0].lstm_prediction, 12.0);
        assert_eq!(records[0].w_cs, 0.1);
        assert_eq!(records[0].actual, Some(12.5));
        assert_eq!(records[2].date, date("2021-03-05"));
    }

    #[test]
    fn identical_coverage_keeps_every_prediction() {
        let preds = predictions(&[("2021-03-01", 1.0), ("2021-03-02", 2.0)]);
        let sents = vec![interval("2021-03-01", 0.0), interval("2021-03-02", 0.5)];
        let acts = series(&[("2021-03-01", 1.0), ("2021-03-02", 2.0)]);
        assert_eq!(time_map(&preds, &sents, &acts).unwrap().len(), 2);
    }

    #[test]
    fn disjoint_ranges_are_an_error() {
        let preds = predictions(&[("2021-03-01", 1.0)]);
        let sents = vec![interval("2021-04-01", 0.0)];
        let acts = series(&[("2021-03-01", 1.0)]);
        assert!(matches!(time_map(&preds, &sents, &acts).unwrap_err(), FusionError::NoOverlap));
    }

    #[test]
    fn sub_daily_sentiment_buckets_are_rejected() {
        let preds = predictions(&[("2021-03-01", 1.0)]);
        let mut second = interval("2021-03-01", 0.2);
        second.start += chrono::Duration::hours(1);
        let sents = vec![interval("2021-03-01", 0.1), second];
        let acts = series(&[("2021-03-01", 1.0)]);
        assert!(matches!(
            time_map(&preds, &sents, &acts).unwrap_err(),
            FusionError::DuplicateBucket { .. }
        ));
    }

    #[test]
    fn out_of_range_sentiment_is_rejected() {
        let preds = predictions(&[("2021-03-01", 1.0)]);
        let sents = vec![interval("2021-03-01", 1.5)];
        let acts = series(&[("2021-03-01", 1.0)]);
        assert!(matches!(
            time_map(&preds, &sents, &acts).unwrap_err(),
            FusionError::BadScore { .. }
        ));
    }

    #[test]
    fn missing_actual_close_yields_none() {
        let preds = predictions(&[("2021-03-01", 1.0)]);
        let sents = vec![interval("2021-03-01", 0.0)];
        let acts = series(&[("2021-04-01", 9.0)]);
        let records = time_map(&preds, &sents, &acts).unwrap();
        assert_eq!(records[0].actual, None);
    }

    #[test]
    fn corpus_line_matches_the_template_byte_for_byte() {
        let records = [record("2021-03-01", 150.1234, 0.5, Some(151.0))];
        assert_eq!(
            emit_corpus(&records).unwrap(),
            "{\"text\": \"LSTM prediction 150.1234 and sentiment score 0.5000\", \"target\": \"actual target 151.0000\"}\n"
        );
    }

    #[test]
    fn empty_records_emit_zero_lines() {
        assert_eq!(emit_corpus(&[]).unwrap(), "");
    }

    #[test]
    fn corpus_lines_are_json_with_exactly_two_keys() {
        let records = [
            record("2021-03-01", 98.7, -0.25, Some(97.6543)),
            record("2021-03-02", 1234.5678, 0.0, Some(1230.0)),
        ];
        let corpus = emit_corpus(&records).unwrap();
        assert!(corpus.ends_with('\n'));
        let lines: Vec<&str> = corpus.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in lines {
            let doc: serde_json::Value = serde_json::from_str(line).unwrap();
            let obj = doc.as_object().unwrap();
            assert_eq!(obj.len(), 2);
            assert!(obj.contains_key("text"));
            assert!(obj.contains_key("target"));
        }
    }

    #[test]
    fn corpus_round_trips_to_four_decimals() {
        let records = [
            record("2021-03-01", 150.12344, 0.5, Some(151.0)),
            record("2021-03-02", 98.7, -0.25, Some(97.6543)),
        ];
        let parsed = parse_corpus(&emit_corpus(&records).unwrap()).unwrap();
        assert_eq!(parsed.len(), 2);
        for (r, (p, s, v)) in records.iter().zip(&parsed) {
            assert!((r.lstm_prediction - p).abs() <= 5e-5);
            assert!((r.w_cs - s).abs() <= 5e-5);
            assert!((r.actual.unwrap() - v).abs() <= 5e-5);
        }
    }

    #[test]
    fn corpus_requires_actuals() {
        let records = [record("2021-03-01", 1.0, 0.0, None)];
        assert!(matches!(
            emit_corpus(&records).unwrap_err(),
            FusionError::MissingActual { .. }
        ));
    }

    #[test]
    fn parse_corpus_rejects_malformed_lines() {
        for text in [
            "not json\n",
            "{\"text\": \"LSTM prediction 1.0000 and sentiment score 0.0000\"}\n",
            "{\"text\": \"wrong 1 and sentiment score 0\", \"target\": \"actual target 1\"}\n",
            "{\"text\": \"LSTM prediction 1.0000 and sentiment score 0.0000\", \"target\": \"actual target x\"}\n",
            "{\"text\": \"LSTM prediction 1 and sentiment score 0\", \"target\": \"actual target 1\", \"extra\": 1}\n",
        ] {
            assert!(parse_corpus(text).is_err(), "{text:?}");
        }
    }

    fn exact_records(n: usize) -> Vec<FusionRecord> {
        // v = 1*p + 5*s + 2 exactly
        (0..n)
            .map(|i| {
                let p = 100.0 + i as f64;
                let s = ((i * 7919) % 13) as f64 / 13.0 - 0.4;
                record("2021-03-01", p, s, Some(p + 5.0 * s + 2.0))
            })
            .collect()
    }

    #[test]
    fn exact_linear_data_recovers_the_coefficients() {
        let model = fit_surrogate(&exact_records(20)).unwrap();
        assert!((model.a - 1.0).abs() < 1e-6, "a = {}", model.a);
        assert!((model.b - 5.0).abs() < 1e-6, "b = {}", model.b);
        assert!((model.c - 2.0).abs() < 1e-6, "c = {}", model.c);
        assert!(model.residual_mse < 1e-10);
        assert_eq!(model.n, 20);
    }

    #[test]
    fn constant_columns_are_named_in_the_error() {
        let flat_s: Vec<FusionRecord> =
            (0..5).map(|i| record("2021-03-01", 100.0 + i as f64, 0.3, Some(101.0))).collect();
        match fit_surrogate(&flat_s).unwrap_err() {
            FusionError::RankDeficient { column } => assert_eq!(column, "sentiment"),
            other => panic!("expected RankDeficient, got {other}"),
        }
        let flat_p: Vec<FusionRecord> =
            (0..5).map(|i| record("2021-03-01", 100.0, i as f64 / 10.0, Some(101.0))).collect();
        match fit_surrogate(&flat_p).unwrap_err() {
            FusionError::RankDeficient { column } => assert_eq!(column, "prediction"),
            other => panic!("expected RankDeficient, got {other}"),
        }
    }

    #[test]
    fn too_few_records_is_an_error() {
        let records = [record("2021-03-01", 1.0, 0.1, Some(1.0)), record("2021-03-02", 2.0, 0.2, None)];
        assert!(matches!(
            fit_surrogate(&records).unwrap_err(),
            FusionError::TooFewRecords { n: 1 }
        ));
    }

    #[test]
    fn fitted_coefficients_match_a_cofactor_inverse_oracle() {
        // Independent solve of the same normal equations by explicit 3x3
        // inversion, then coefficient-level comparison.
        let records: Vec<FusionRecord> = (0..40)
            .map(|i| {
                let p = 50.0 + (i as f64 * 1.37) % 25.0;
                let s = ((i as f64 * 0.61).sin()) * 0.8;
                let y = 0.9 * p - 3.0 * s + 7.0 + ((i * i) as f64 * 0.11).sin() * 0.5;
                record("2021-03-01", p, s, Some(y))
            })
            .collect();
        let model = fit_surrogate(&records).unwrap();

        let rows: Vec<[f64; 3]> =
            records.iter().map(|r| [r.lstm_prediction, r.w_cs, 1.0]).collect();
        let ys: Vec<f64> = records.iter().map(|r| r.actual.unwrap()).collect();
        let mut m = [[0.0f64; 3]; 3];
        let mut rhs = [0.0f64; 3];
        for (x, &y) in rows.iter().zip(&ys) {
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += x[i] * x[j];
                }
                rhs[i] += x[i] * y;
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let cof = |r1: usize, r2: usize, c1: usize, c2: usize| {
            m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]
        };
        let inv = [
            [cof(1, 2, 1, 2) / det, -cof(0, 2, 1, 2) / det, cof(0, 1, 1, 2) / det],
            [-cof(1, 2, 0, 2) / det, cof(0, 2, 0, 2) / det, -cof(0, 1, 0, 2) / det],
            [cof(1, 2, 0, 1) / det, -cof(0, 2, 0, 1) / det, cof(0, 1, 0, 1) / det],
        ];
        let oracle: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| inv[i][j] * rhs[j]).sum::<f64>())
            .collect();
        let scale = oracle.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        assert!((model.a - oracle[0]).abs() < 1e-9 * scale);
        assert!((model.b - oracle[1]).abs() < 1e-9 * scale);
        assert!((model.c - oracle[2]).abs() < 1e-9 * scale);

        // And the fitted values agree through predict.
        for r in &records {
            let ours = surrogate_predict(&model, r.lstm_prediction, r.w_cs);
            let theirs =
                oracle[0] * r.lstm_prediction + oracle[1] * r.w_cs + oracle[2];
            assert!((ours - theirs).abs() < 1e-9 * theirs.abs().max(1.0));
        }
    }

    #[test]
    fn surrogate_predict_is_plain_arithmetic() {
        let identity = SurrogateModel { a: 1.0, b: 0.0, c: 0.0, residual_mse: 0.0, n: 3 };
        assert_eq!(surrogate_predict(&identity, 123.45, 0.7), 123.45);

        let model = SurrogateModel { a: 1.0, b: 5.0, c: 2.0, residual_mse: 0.0, n: 3 };
        assert_eq!(surrogate_predict(&model, 100.0, 0.2), 103.0);

        let other = SurrogateModel { a: 1.0, b: -17.0, c: 2.0, residual_mse: 0.0, n: 3 };
        assert_eq!(surrogate_predict(&model, 50.0, 0.0), surrogate_predict(&other, 50.0, 0.0));
    }

    #[test]
    fn records_csv_round_trips_including_missing_actuals() {
        let records = [
            record("2021-03-01", 10.5, 0.25, Some(10.75)),
            record("2021-03-02", 11.5, -0.5, None),
        ];
        let csv = to_records_csv(&records);
        assert!(csv.starts_with("date,lstm_pred,w_cs,actual\n"));
        assert_eq!(from_records_csv(&csv).unwrap(), records);
    }

    #[test]
    fn records_csv_rejects_malformed_input() {
        for text in [
            "wrong header\n",
            "date,lstm_pred,w_cs,actual\n2021-03-01,1.0,0.1\n",
            "date,lstm_pred,w_cs,actual\nnotadate,1.0,0.1,2.0\n",
            "date,lstm_pred,w_cs,actual\n2021-03-01,1.0,7.0,2.0\n",
        ] {
            assert!(matches!(
                from_records_csv(text).unwrap_err(),
                FusionError::RecordsCsv { .. }
            ), "{text:?}");
        }
    }

    proptest! {
        // The joined dates are exactly the set intersection, in order.
        #[test]
        fn join_is_a_set_intersection(
            pred_days in proptest::collection::btree_set(0i64..60, 1..30),
            sent_days in proptest::collection::btree_set(0i64..60, 1..30),
        ) {
            let base = date("2021-01-01");
            let preds = PredictionSeries {
                points: pred_days
                    .iter()
                    .map(|&d| PredictionPoint {
                        date: base + chrono::Duration::days(d),
                        value: d as f64,
                    })
                    .collect(),
            };
            let sents: Vec<SentimentInterval> = sent_days
                .iter()
                .map(|&d| {
                    let day = base + chrono::Duration::days(d);
                    interval(&day.to_string(), 0.0)
                })
                .collect();
            let acts = series(&[("2021-01-01", 1.0)]);

            let expected: Vec<i64> =
                pred_days.intersection(&sent_days).copied().collect();
            match time_map(&preds, &sents, &acts) {
                Ok(records) => {
                    let got: Vec<i64> = records
                        .iter()
                        .map(|r| (r.date - base).num_days())
                        .collect();
                    prop_assert_eq!(got, expected);
                }
                Err(FusionError::NoOverlap) => prop_assert!(expected.is_empty()),
                Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
            }
        }

        // In-sample, OLS with the forecast as a regressor can never lose to
        // the raw forecast.
        #[test]
        fn surrogate_never_degrades_in_sample(
            rows in proptest::collection::vec((50.0f64..150.0, -1.0f64..1.0, -10.0f64..10.0), 4..40),
        ) {
            let records: Vec<FusionRecord> = rows
                .iter()
                .map(|&(p, s, noise)| record("2021-03-01", p, s, Some(p + noise)))
                .collect();
            match fit_surrogate(&records) {
                Ok(model) => {
                    let raw_mse = records
                        .iter()
                        .map(|r| {
                            let e = r.actual.unwrap() - r.lstm_prediction;
                            e * e
                        })
                        .sum::<f64>() / records.len() as f64;
                    prop_assert!(model.residual_mse <= raw_mse + 1e-9);
                }
                // Degenerate draws (constant columns) are legitimately rejected.
                Err(FusionError::RankDeficient { .. }) | Err(FusionError::Singular) => {}
                Err(other) => return Err(TestCaseError::fail(format!("{other}"))),
            }
        }
    }
}

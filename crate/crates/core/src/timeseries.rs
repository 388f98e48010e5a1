//! OHLCV ingestion, z-score normalization, and sliding-window datasets.
//!
//! The CSV schema is fixed: `date,open,high,low,close,adj_close,volume`,
//! ISO-8601 dates, `.` decimal separator, no thousands separators. Rows are
//! sorted by date on load and duplicate dates are rejected, so everything
//! downstream can assume a strictly increasing daily series.
//!
//! Normalization is the classic z-score with the *population* standard
//! deviation (1/n, not 1/(n-1)); constant features are rejected rather than
//! silently producing infinities. Windowing never lets an input row overlap
//! its target row, which keeps label leakage structurally impossible.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Errors from parsing, normalization, or windowing.
#[derive(Debug, Error)]
pub enum TimeseriesError {
    #[error("csv header must be `{expected}`, got `{got}`")]
    Header { expected: &'static str, got: String },

    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },

    #[error("duplicate date {date} in series")]
    DuplicateDate { date: NaiveDate },

    #[error("series has no data rows")]
    Empty,

    #[error("need at least 2 samples to fit normalization, got {got}")]
    TooFewSamples { got: usize },

    #[error("constant feature at column {index}: standard deviation is zero")]
    ConstantFeature { index: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} has {got} features, expected {expected}")]
    FeatureWidth { row: usize, got: usize, expected: usize },

    #[error("feature dimension mismatch: normalization has {params} columns, data has {data}")]
    DimensionMismatch { params: usize, data: usize },

    #[error("{what} must be positive, got 0")]
    ZeroParam { what: &'static str },

    #[error("series of {rows} rows is too short for window length {window} plus horizon {horizon}")]
    TooShort { rows: usize, window: usize, horizon: usize },

    #[error("target column {index} out of range for {width} features")]
    TargetColumn { index: usize, width: usize },

    #[error("unknown feature column `{0}` (expected one of open, high, low, close, adj_close, volume)")]
    UnknownColumn(String),
}

const HEADER: &str = "date,open,high,low,close,adj_close,volume";

/// One daily bar.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvRow {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: u64,
}

/// A validated daily series: strictly increasing dates, positive finite prices.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvSeries {
    rows: Vec<OhlcvRow>,
}

impl OhlcvSeries {
    /// Builds a series from rows, sorting by date and enforcing invariants.
    pub fn from_rows(mut rows: Vec<OhlcvRow>) -> Result<Self, TimeseriesError> {
        if rows.is_empty() {
            return Err(TimeseriesError::Empty);
        }
        rows.sort_by_key(|r| r.date);
        for pair in rows.windows(2) {
            if pair[0].date == pair[1].date {
                return Err(TimeseriesError::DuplicateDate { date: pair[0].date });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[OhlcvRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.rows.iter().map(|r| r.date)
    }

    /// Index of the row with this exact date, if present. Rows are sorted, so
    /// this is a binary search.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.rows.binary_search_by_key(&date, |r| r.date).ok()
    }

    /// Close price by date, if present.
    pub fn close_on(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.rows[i].close)
    }

    /// Raw values of one column across the series.
    pub fn column(&self, col: FeatureColumn) -> Vec<f64> {
        self.rows.iter().map(|r| col.value(r)).collect()
    }

    /// Renders the series back into the canonical CSV schema.
    ///
    /// Floats print in shortest round-trip form, so parse(to_csv(s)) == s.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.date, r.open, r.high, r.low, r.close, r.adj_close, r.volume
            ));
        }
        out
    }
}

/// Parses the canonical OHLCV CSV schema.
///
/// Errors carry 1-based line numbers (the header is line 1). Rows may arrive
/// in any order; the returned series is sorted by date.
pub fn load_ohlcv(csv_text: &str) -> Result<OhlcvSeries, TimeseriesError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());

    let header = reader
        .headers()
        .map_err(|e| TimeseriesError::Header {
            expected: HEADER,
            got: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != HEADER {
        return Err(TimeseriesError::Header {
            expected: HEADER,
            got: header,
        });
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TimeseriesError::Row {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |reason: String| TimeseriesError::Row { line, reason };

        if record.len() != 7 {
            return Err(row_err(format!("expected 7 fields, got {}", record.len())));
        }

        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| row_err(format!("bad date `{}`: {e}", &record[0])))?;

        let mut prices = [0.0f64; 5];
        for (slot, (idx, name)) in prices.iter_mut().zip(
            [(1, "open"), (2, "high"), (3, "low"), (4, "close"), (5, "adj_close")],
        ) {
            let raw = &record[idx];
            let value: f64 = raw
                .parse()
                .map_err(|e| row_err(format!("bad {name} `{raw}`: {e}")))?;
            if !value.is_finite() || value <= 0.0 {
                return Err(row_err(format!("{name} must be a positive finite number, got `{raw}`")));
            }
            *slot = value;
        }

        let volume: u64 = record[6]
            .parse()
            .map_err(|e| row_err(format!("bad volume `{}`: {e}", &record[6])))?;

        rows.push(OhlcvRow {
            date,
            open: prices[0],
            high: prices[1],
            low: prices[2],
            close: prices[3],
            adj_close: prices[4],
            volume,
        });
    }

    OhlcvSeries::from_rows(rows)
}

/// A column of the OHLCV schema usable as a model feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureColumn {
    Open,
    High,
    Low,
    Close,
    AdjClose,
    Volume,
}

impl FeatureColumn {
    fn value(self, row: &OhlcvRow) -> f64 {
        match self {
            FeatureColumn::Open => row.open,
            FeatureColumn::High => row.high,
            FeatureColumn::Low => row.low,
            FeatureColumn::Close => row.close,
            FeatureColumn::AdjClose => row.adj_close,
            FeatureColumn::Volume => row.volume as f64,
        }
    }
}

impl fmt::Display for FeatureColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FeatureColumn::Open => "open",
            FeatureColumn::High => "high",
            FeatureColumn::Low => "low",
            FeatureColumn::Close => "close",
            FeatureColumn::AdjClose => "adj_close",
            FeatureColumn::Volume => "volume",
        };
        f.write_str(name)
    }
}

impl FromStr for FeatureColumn {
    type Err = TimeseriesError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "open" => Ok(FeatureColumn::Open),
            "high" => Ok(FeatureColumn::High),
            "low" => Ok(FeatureColumn::Low),
            "close" => Ok(FeatureColumn::Close),
            "adj_close" => Ok(FeatureColumn::AdjClose),
            "volume" => Ok(FeatureColumn::Volume),
            other => Err(TimeseriesError::UnknownColumn(other.to_string())),
        }
    }
}

/// Extracts the selected columns as a row-major feature matrix.
pub fn feature_matrix<F: Scalar>(series: &OhlcvSeries, cols: &[FeatureColumn]) -> Vec<Vec<F>> {
    series
        .rows
        .iter()
        .map(|row| cols.iter().map(|c| F::lit(c.value(row))).collect())
        .collect()
}

/// Per-feature z-score parameters. `sigma` is the population standard
/// deviation and is always strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams<F> {
    pub mu: Vec<F>,
    pub sigma: Vec<F>,
}

impl<F: Scalar> NormParams<F> {
    pub fn width(&self) -> usize {
        self.mu.len()
    }

    /// Normalizes a single value from column `col`.
    pub fn apply_value(&self, col: usize, x: F) -> F {
        (x - self.mu[col]) / self.sigma[col]
    }

    /// Maps a normalized value from column `col` back to the original scale.
    pub fn invert_value(&self, col: usize, z: F) -> F {
        z * self.sigma[col] + self.mu[col]
    }
}

fn check_widths<F: Scalar>(values: &[Vec<F>], expected: usize) -> Result<(), TimeseriesError> {
    for (row, r) in values.iter().enumerate() {
        if r.len() != expected {
            return Err(TimeseriesError::FeatureWidth {
                row,
                got: r.len(),
                expected,
            });
        }
    }
    Ok(())
}

/// Fits z-score parameters column-wise over a row-major matrix.
///
/// Requires at least two samples, finite inputs, and a non-constant value set
/// in every column. Fit this on the training split only.
pub fn zscore_fit<F: Scalar>(values: &[Vec<F>]) -> Result<NormParams<F>, TimeseriesError> {
    if values.len() < 2 {
        return Err(TimeseriesError::TooFewSamples { got: values.len() });
    }
    let width = values[0].len();
    check_widths(values, width)?;
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(TimeseriesError::NonFinite { row: i, col: j });
            }
        }
    }

    let n = F::lit(values.len() as f64);
    let mut mu = vec![F::zero(); width];
    let mut sigma = vec![F::zero(); width];
    for j in 0..width {
        let sum: F = values.iter().map(|r| r[j]).sum();
        mu[j] = sum / n;
        let var: F = values
            .iter()
            .map(|r| {
                let d = r[j] - mu[j];
                d * d
            })
            .sum::<F>()
            / n;
        sigma[j] = var.sqrt();
        if sigma[j] <= F::zero() || !sigma[j].is_finite() {
            return Err(TimeseriesError::ConstantFeature { index: j });
        }
    }
    Ok(NormParams { mu, sigma })
}

/// Applies `(x - mu) / sigma` column-wise.
pub fn zscore_apply<F: Scalar>(
    values: &[Vec<F>],
    params: &NormParams<F>,
) -> Result<Vec<Vec<F>>, TimeseriesError> {
    let width = params.width();
    if values.iter().any(|r| r.len() != width) {
        let bad = values.iter().find(|r| r.len() != width).map(|r| r.len()).unwrap_or(0);
        return Err(TimeseriesError::DimensionMismatch {
            params: width,
            data: bad,
        });
    }
    Ok(values
        .iter()
        .map(|r| (0..width).map(|j| params.apply_value(j, r[j])).collect())
        .collect())
}

/// Applies `z * sigma + mu` column-wise, undoing [`zscore_apply`].
pub fn zscore_invert<F: Scalar>(
    values: &[Vec<F>],
    params: &NormParams<F>,
) -> Result<Vec<Vec<F>>, TimeseriesError> {
    let width = params.width();
    if values.iter().any(|r| r.len() != width) {
        let bad = values.iter().find(|r| r.len() != width).map(|r| r.len()).unwrap_or(0);
        return Err(TimeseriesError::DimensionMismatch {
            params: width,
            data: bad,
        });
    }
    Ok(values
        .iter()
        .map(|r| (0..width).map(|j| params.invert_value(j, r[j])).collect())
        .collect())
}

/// One training example: `window_len` consecutive feature rows and the target
/// value `horizon` steps after the last input row.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<F> {
    /// `window_len` rows of `feature_width` values each.
    pub input: Vec<Vec<F>>,
    /// Normalized target (the `target_col` feature at `target_row`).
    pub target: F,
    /// Row index of the target in the source matrix.
    pub target_row: usize,
}

/// Sliding windows over a normalized feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset<F> {
    pub windows: Vec<Window<F>>,
    pub window_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub target_col: usize,
    pub feature_width: usize,
}

impl<F> WindowedDataset<F> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Cuts sliding windows out of a row-major feature matrix.
///
/// Window `i` covers input rows `[i*stride, i*stride + window_len)` and its
/// target sits at row `i*stride + window_len - 1 + horizon`. The number of
/// windows is `(n - window_len - horizon) / stride + 1`.
pub fn make_windows<F: Scalar>(
    series: &[Vec<F>],
    window_len: usize,
    horizon: usize,
    stride: usize,
    target_col: usize,
) -> Result<WindowedDataset<F>, TimeseriesError> {
    if window_len == 0 {
        return Err(TimeseriesError::ZeroParam { what: "window_len" });
    }
    if horizon == 0 {
        return Err(TimeseriesError::ZeroParam { what: "horizon" });
    }
    if stride == 0 {
        return Err(TimeseriesError::ZeroParam { what: "stride" });
    }
    let n = series.len();
    if n < window_len + horizon {
        return Err(TimeseriesError::TooShort {
            rows: n,
            window: window_len,
            horizon,
        });
    }
    let width = series[0].len();
    check_widths(series, width)?;
    if target_col >= width {
        return Err(TimeseriesError::TargetColumn {
            index: target_col,
            width,
        });
    }

    let count = (n - window_len - horizon) / stride + 1;
    let mut windows = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride;
        let target_row = start + window_len - 1 + horizon;
        windows.push(Window {
            input: series[start..start + window_len].to_vec(),
            target: series[target_row][target_col],
            target_row,
        });
    }

    Ok(WindowedDataset {
        windows,
        window_len,
        horizon,
        stride,
        target_col,
        feature_width: width,
    })
}

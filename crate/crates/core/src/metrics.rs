//! Error metrics and the baseline-vs-hybrid comparison report.
//!
//! Four standard regression metrics over aligned actual/predicted series:
//! MAE, MSE, RMSE, and MAPE (in percent). MAPE requires every actual to be
//! nonzero; that is a hard error naming the offending index, never an
//! epsilon fudge. All functions are pure.

use std::fmt::Write as _;

use thiserror::Error;

use crate::scalar::Scalar;

/// Errors from metric computation and report rendering.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("series lengths differ: actual {actual}, predicted {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },

    #[error("cannot compute metrics over empty series")]
    Empty,

    #[error("non-finite value in {series} series at index {index}")]
    NonFinite { series: &'static str, index: usize },

    #[error("actual value at index {index} is zero; MAPE is undefined")]
    ZeroActual { index: usize },

    #[error("reports cover different evaluation sets: n {left} vs {right}")]
    MismatchedN { left: usize, right: usize },
}

/// The four error metrics over one evaluation set (MAPE in percent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport<F> {
    pub mae: F,
    pub mse: F,
    pub rmse: F,
    pub mape: F,
    pub n: usize,
}

/// Computes all four metrics:
///
///   mae  = mean |e|        mse  = mean e^2
///   rmse = sqrt(mse)       mape = 100 * mean(|e| / |y|)
pub fn compute_metrics<F: Scalar>(
    actual: &[F],
    predicted: &[F],
) -> Result<MetricReport<F>, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (series, values) in [("actual", actual), ("predicted", predicted)] {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite { series, index });
        }
    }

    let n = F::from_usize(actual.len()).expect("length fits the scalar");
    let mut abs_sum = F::zero();
    let mut sq_sum = F::zero();
    let mut pct_sum = F::zero();
    for (index, (&y, &p)) in actual.iter().zip(predicted).enumerate() {
        let e = y - p;
        abs_sum = abs_sum + e.abs();
        sq_sum = sq_sum + e * e;
        if y == F::zero() {
            return Err(MetricsError::ZeroActual { index });
        }
        pct_sum = pct_sum + e.abs() / y.abs();
    }
    let mse = sq_sum / n;
    Ok(MetricReport {
        mae: abs_sum / n,
        mse,
        rmse: mse.sqrt(),
        mape: F::lit(100.0) * pct_sum / n,
        n: actual.len(),
    })
}

/// Output layout for the comparison report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

fn improvement_pct(baseline: f64, hybrid: f64) -> f64 {
    if baseline == hybrid {
        // covers the 0-vs-0 case without dividing by zero
        0.0
    } else {
        100.0 * (baseline - hybrid) / baseline
    }
}

/// Renders the baseline-vs-hybrid table: one row per metric in MAE, MSE,
/// RMSE, MAPE order, with the per-row percentage improvement. Both reports
/// must cover the same evaluation set.
pub fn compare_report<F: Scalar>(
    baseline: &MetricReport<F>,
    hybrid: &MetricReport<F>,
    format: ReportFormat,
) -> Result<String, MetricsError> {
    if baseline.n != hybrid.n {
        return Err(MetricsError::MismatchedN { left: baseline.n, right: hybrid.n });
    }
    let rows = [
        ("MAE", baseline.mae, hybrid.mae),
        ("MSE", baseline.mse, hybrid.mse),
        ("RMSE", baseline.rmse, hybrid.rmse),
        ("MAPE", baseline.mape, hybrid.mape),
    ];
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            writeln!(out, "{:<8}{:>14}{:>14}{:>14}", "metric", "baseline", "hybrid", "improvement")
                .expect("string writer");
            for (name, b, h) in rows {
                let pct = improvement_pct(b.as_f64(), h.as_f64());
                writeln!(
                    out,
                    "{:<8}{:>14.6}{:>14.6}{:>13.2}%",
                    name,
                    b.as_f64(),
                    h.as_f64(),
                    pct
                )
                .expect("string writer");
            }
        }
        ReportFormat::Csv => {
            out.push_str("metric,baseline,hybrid,improvement_pct\n");
            for (name, b, h) in rows {
                let pct = improvement_pct(b.as_f64(), h.as_f64());
                writeln!(out, "{},{:.6},{:.6},{:.2}", name, b.as_f64(), h.as_f64(), pct)
                    .expect("string writer");
            }
        }
    }
    Ok(out)
}

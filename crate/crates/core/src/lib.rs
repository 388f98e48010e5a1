//! Core library for a two-stage stock forecasting pipeline.
//!
//! Stage one trains a convolutional LSTM on windowed OHLCV series and emits
//! naive next-step forecasts. Stage two scores news articles for sentiment,
//! aggregates them into weighted per-interval scores, joins them onto the
//! forecasts by date, and fits a small fusion model that corrects the
//! forecast using the sentiment signal. The [`metrics`] module quantifies
//! how much the correction helps; [`synth`] generates coupled price/news
//! fixtures with known ground truth so the whole pipeline can be tested
//! end to end.
//!
//! Numeric kernels are generic over the scalar type via [`scalar::Scalar`]
//! (any `num-traits` float works); [`Real`] fixes the default precision used
//! by the IO layers and the CLI.

pub mod convlstm;
pub mod fusion;
pub mod metrics;
pub mod news;
pub mod pipeline;
pub mod scalar;
pub mod sentiment;
pub mod seqlen;
pub mod synth;
pub mod timeseries;

/// Default scalar type for end-to-end runs.
pub type Real = f64;

/// Conv-LSTM model at default precision.
pub type ConvLstmModel = convlstm::ConvLstmModel<Real>;
/// Trainable parameter bundle at default precision.
pub type ConvLstmParams = convlstm::ConvLstmParams<Real>;
/// Training hyperparameters at default precision.
pub type TrainConfig = convlstm::TrainConfig<Real>;
/// Windowed dataset at default precision.
pub type WindowedDataset = timeseries::WindowedDataset<Real>;
/// Normalization parameters at default precision.
pub type NormParams = timeseries::NormParams<Real>;
/// Length-search hyperparameters at default precision.
pub type SearchConfig = seqlen::SearchConfig<Real>;

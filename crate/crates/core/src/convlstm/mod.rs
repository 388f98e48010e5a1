//! A small convolutional LSTM for one-step-ahead price forecasting.
//!
//! Each gate's pre-activation is `conv(K_g, x_t) + U_g * h_{t-1} + b_g`: a
//! 1-D convolution over the feature axis (same padding, odd kernel width,
//! `filters` output channels) plus a dense recurrent term. The hidden state
//! therefore has width `filters * features`. Cell equations:
//!
//! ```text
//! i_t = sigmoid(a_i)          f_t = sigmoid(a_f)
//! o_t = sigmoid(a_o)          g_t = tanh(a_c)
//! C_t = f_t . C_{t-1} + i_t . g_t
//! h_t = o_t . tanh(C_t)
//! ```
//!
//! A linear readout maps the final hidden state to one scalar: the normalized
//! next-step target. Training (BPTT + Adam) lives in [`train`]; this file
//! holds the parameter layout, the forward pass, the losses, prediction over
//! a series, and the versioned JSON checkpoint.
//!
//! Parameters are stored in one flat vector so the optimizer, gradient
//! clipping, and the finite-difference gradient check can treat the model as
//! a single point in R^n. Accessors expose the per-gate views.

mod train;

pub use train::{grad_check, train, Adam};

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::timeseries::{
    feature_matrix, zscore_apply, FeatureColumn, NormParams, OhlcvSeries, TimeseriesError,
};

/// Errors from model construction, evaluation, training, or checkpoints.
#[derive(Debug, Error)]
pub enum ConvLstmError {
    #[error("bad model geometry: {reason}")]
    BadGeometry { reason: String },

    #[error("input has {got} features, model expects {expected}")]
    FeatureWidth { got: usize, expected: usize },

    #[error("state has width {got}, model expects {expected}")]
    StateWidth { got: usize, expected: usize },

    #[error("non-finite value in cell input")]
    NonFiniteInput,

    #[error("window is empty")]
    EmptyWindow,

    #[error("loss over empty series")]
    EmptyLoss,

    #[error("series length mismatch: actual {actual}, predicted {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },

    #[error("huber delta must be positive and finite, got {got}")]
    BadDelta { got: f64 },

    #[error("bad training config: {reason}")]
    BadConfig { reason: String },

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("series of {rows} rows is too short: prediction needs at least {needed}")]
    SeriesTooShort { rows: usize, needed: usize },

    #[error("normalization: {0}")]
    Norm(#[from] TimeseriesError),

    #[error("checkpoint format version {got}, this build reads {expected}")]
    CheckpointVersion { got: u32, expected: u32 },

    #[error("corrupt checkpoint: {reason}")]
    CorruptCheckpoint { reason: String },

    #[error("prediction csv line {line}: {reason}")]
    PredictionCsv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four LSTM gates, in parameter-layout order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn index(self) -> usize {
        match self {
            Gate::Input => 0,
            Gate::Forget => 1,
            Gate::Output => 2,
            Gate::Candidate => 3,
        }
    }
}

/// Model shape. Hidden width is derived: `filters * features`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    /// Input feature count (width of each window row).
    pub features: usize,
    /// Convolution output channels per gate.
    pub filters: usize,
    /// Convolution kernel width over the feature axis; must be odd.
    pub kernel_width: usize,
}

impl Geometry {
    pub fn new(features: usize, filters: usize, kernel_width: usize) -> Result<Self, ConvLstmError> {
        let g = Geometry { features, filters, kernel_width };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConvLstmError> {
        if self.features == 0 || self.filters == 0 || self.kernel_width == 0 {
            return Err(ConvLstmError::BadGeometry {
                reason: "features, filters, and kernel width must all be at least 1".into(),
            });
        }
        if self.kernel_width % 2 == 0 {
            return Err(ConvLstmError::BadGeometry {
                reason: format!(
                    "kernel width must be odd for symmetric same-padding, got {}",
                    self.kernel_width
                ),
            });
        }
        Ok(())
    }

    /// Hidden-state width: one channel per (filter, feature) pair.
    pub fn hidden(&self) -> usize {
        self.filters * self.features
    }

    fn gate_block(&self) -> usize {
        self.filters * self.kernel_width + self.hidden() * self.hidden() + self.hidden()
    }

    /// Total parameter count: four gates plus the scalar readout.
    pub fn param_count(&self) -> usize {
        4 * self.gate_block() + self.hidden() + 1
    }

    fn kernel_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let base = gate.index() * self.gate_block();
        base..base + self.filters * self.kernel_width
    }

    fn recurrent_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let start = self.kernel_range(gate).end;
        start..start + self.hidden() * self.hidden()
    }

    fn bias_range(&self, gate: Gate) -> std::ops::Range<usize> {
        let start = self.recurrent_range(gate).end;
        start..start + self.hidden()
    }

    fn readout_w_range(&self) -> std::ops::Range<usize> {
        let start = 4 * self.gate_block();
        start..start + self.hidden()
    }

    fn readout_b_index(&self) -> usize {
        self.readout_w_range().end
    }
}

/// All trainable parameters as one flat vector plus the shape that indexes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLstmParams<F> {
    geometry: Geometry,
    theta: Vec<F>,
}

impl<F: Scalar> ConvLstmParams<F> {
    /// Zero-initialized parameters (useful for tests and as an Adam buffer shape).
    pub fn zeros(geometry: Geometry) -> Result<Self, ConvLstmError> {
        geometry.validate()?;
        Ok(Self {
            theta: vec![F::zero(); geometry.param_count()],
            geometry,
        })
    }

    /// Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases zero
    /// except the forget gate's, which starts at +1.0 so early training does
    /// not flush the cell state.
    pub fn init(geometry: Geometry, seed: u64) -> Result<Self, ConvLstmError> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(geometry)?;
        let hidden = geometry.hidden();

        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, theta: &mut [F]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for slot in &mut theta[range] {
                let u: f64 = rng.gen();
                *slot = F::lit(bound * (2.0 * u - 1.0));
            }
        };

        for gate in Gate::ALL {
            fill(geometry.kernel_range(gate), geometry.kernel_width, &mut params.theta);
            fill(geometry.recurrent_range(gate), hidden, &mut params.theta);
        }
        fill(geometry.readout_w_range(), hidden, &mut params.theta);

        for b in &mut params.theta[geometry.bias_range(Gate::Forget)] {
            *b = F::one();
        }
        Ok(params)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Convolution kernel for one gate, row-major `[filter][tap]`.
    pub fn kernel(&self, gate: Gate) -> &[F] {
        &self.theta[self.geometry.kernel_range(gate)]
    }

    /// Recurrent weights for one gate, row-major `[hidden][hidden]`.
    pub fn recurrent(&self, gate: Gate) -> &[F] {
        &self.theta[self.geometry.recurrent_range(gate)]
    }

    /// Bias vector for one gate.
    pub fn bias(&self, gate: Gate) -> &[F] {
        &self.theta[self.geometry.bias_range(gate)]
    }

    /// Readout weights mapping the final hidden state to the scalar output.
    pub fn readout_weights(&self) -> &[F] {
        &self.theta[self.geometry.readout_w_range()]
    }

    pub fn readout_bias(&self) -> F {
        self.theta[self.geometry.readout_b_index()]
    }

    /// The flat parameter vector. Mutation is allowed (the optimizer and the
    /// gradient check need it); the length must never change.
    pub fn theta(&self) -> &[F] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [F] {
        &mut self.theta
    }
}

/// Hidden and cell state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState<F> {
    pub h: Vec<F>,
    pub c: Vec<F>,
}

impl<F: Scalar> CellState<F> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![F::zero(); hidden],
            c: vec![F::zero(); hidden],
        }
    }
}

fn sigmoid<F: Scalar>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// Everything the backward pass needs about one time step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache<F> {
    pub i: Vec<F>,
    pub f: Vec<F>,
    pub o: Vec<F>,
    pub g: Vec<F>,
    pub c: Vec<F>,
    pub tanh_c: Vec<F>,
    pub h: Vec<F>,
}

/// `conv(K_g, x) + U_g h_prev + b_g` for one gate.
fn gate_preactivation<F: Scalar>(
    params: &ConvLstmParams<F>,
    gate: Gate,
    x: &[F],
    h_prev: &[F],
) -> Vec<F> {
    let geo = params.geometry;
    let feats = geo.features;
    let hidden = geo.hidden();
    let k = geo.kernel_width;
    let off = k / 2;
    let kernel = params.kernel(gate);
    let rec = params.recurrent(gate);
    let bias = params.bias(gate);

    let mut out = vec![F::zero(); hidden];
    for c in 0..geo.filters {
        for j in 0..feats {
            let mut acc = F::zero();
            for d in 0..k {
                // Same padding: tap d reads x[j + d - off], zero outside.
                let xi = j + d;
                if xi >= off && xi - off < feats {
                    acc = acc + kernel[c * k + d] * x[xi - off];
                }
            }
            out[c * feats + j] = acc;
        }
    }
    for r in 0..hidden {
        let mut acc = out[r];
        let row = &rec[r * hidden..(r + 1) * hidden];
        for (w, hv) in row.iter().zip(h_prev) {
            acc = acc + *w * *hv;
        }
        out[r] = acc + bias[r];
    }
    out
}

pub(crate) fn step<F: Scalar>(
    params: &ConvLstmParams<F>,
    x: &[F],
    h_prev: &[F],
    c_prev: &[F],
) -> StepCache<F> {
    let hidden = params.geometry.hidden();
    let a_i = gate_preactivation(params, Gate::Input, x, h_prev);
    let a_f = gate_preactivation(params, Gate::Forget, x, h_prev);
    let a_o = gate_preactivation(params, Gate::Output, x, h_prev);
    let a_g = gate_preactivation(params, Gate::Candidate, x, h_prev);

    let mut cache = StepCache {
        i: vec![F::zero(); hidden],
        f: vec![F::zero(); hidden],
        o: vec![F::zero(); hidden],
        g: vec![F::zero(); hidden],
        c: vec![F::zero(); hidden],
        tanh_c: vec![F::zero(); hidden],
        h: vec![F::zero(); hidden],
    };
    for r in 0..hidden {
        let i = sigmoid(a_i[r]);
        let f = sigmoid(a_f[r]);
        let o = sigmoid(a_o[r]);
        let g = a_g[r].tanh();
        let c = f * c_prev[r] + i * g;
        let tc = c.tanh();
        cache.i[r] = i;
        cache.f[r] = f;
        cache.o[r] = o;
        cache.g[r] = g;
        cache.c[r] = c;
        cache.tanh_c[r] = tc;
        cache.h[r] = o * tc;
    }
    cache
}

/// One validated cell step.
///
/// Rejects shape mismatches and non-finite inputs; every component of the
/// returned `h` lies strictly inside (-1, 1).
pub fn cell_forward<F: Scalar>(
    x: &[F],
    prev: &CellState<F>,
    params: &ConvLstmParams<F>,
) -> Result<CellState<F>, ConvLstmError> {
    let geo = params.geometry;
    if x.len() != geo.features {
        return Err(ConvLstmError::FeatureWidth {
            got: x.len(),
            expected: geo.features,
        });
    }
    let hidden = geo.hidden();
    if prev.h.len() != hidden || prev.c.len() != hidden {
        return Err(ConvLstmError::StateWidth {
            got: prev.h.len().max(prev.c.len()),
            expected: hidden,
        });
    }
    if x.iter().chain(&prev.h).chain(&prev.c).any(|v| !v.is_finite()) {
        return Err(ConvLstmError::NonFiniteInput);
    }
    let cache = step(params, x, &prev.h, &prev.c);
    Ok(CellState { h: cache.h, c: cache.c })
}

/// Runs the cell over a whole window from zero state and applies the readout.
pub fn forward<F: Scalar>(window: &[Vec<F>], params: &ConvLstmParams<F>) -> Result<F, ConvLstmError> {
    let (pred, _) = forward_cached(window, params, false)?;
    Ok(pred)
}

/// Forward pass that optionally keeps per-step activations for BPTT.
pub(crate) fn forward_cached<F: Scalar>(
    window: &[Vec<F>],
    params: &ConvLstmParams<F>,
    keep: bool,
) -> Result<(F, Vec<StepCache<F>>), ConvLstmError> {
    if window.is_empty() {
        return Err(ConvLstmError::EmptyWindow);
    }
    let geo = params.geometry;
    for row in window {
        if row.len() != geo.features {
            return Err(ConvLstmError::FeatureWidth {
                got: row.len(),
                expected: geo.features,
            });
        }
    }
    let hidden = geo.hidden();
    let mut h = vec![F::zero(); hidden];
    let mut c = vec![F::zero(); hidden];
    let mut caches = Vec::with_capacity(if keep { window.len() } else { 0 });
    for x in window {
        let cache = step(params, x, &h, &c);
        h.clone_from(&cache.h);
        c.clone_from(&cache.c);
        if keep {
            caches.push(cache);
        }
    }
    let mut pred = params.readout_bias();
    for (w, hv) in params.readout_weights().iter().zip(&h) {
        pred = pred + *w * *hv;
    }
    Ok((pred, caches))
}

/// Which training loss to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Huber,
    Mse,
}

impl std::str::FromStr for LossKind {
    type Err = ConvLstmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "huber" => Ok(LossKind::Huber),
            "mse" => Ok(LossKind::Mse),
            other => Err(ConvLstmError::BadConfig {
                reason: format!("unknown loss `{other}` (expected huber or mse)"),
            }),
        }
    }
}

/// Mean squared error: `(1/n) * sum (y - y_hat)^2`.
pub fn loss_mse<F: Scalar>(actual: &[F], predicted: &[F]) -> Result<F, ConvLstmError> {
    if actual.len() != predicted.len() {
        return Err(ConvLstmError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(ConvLstmError::EmptyLoss);
    }
    let n = F::lit(actual.len() as f64);
    let sum: F = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| {
            let e = *y - *p;
            e * e
        })
        .sum();
    Ok(sum / n)
}

/// Huber loss: quadratic inside `|e| <= delta`, linear outside, averaged.
///
/// Per element: `e^2 / 2` if `|e| <= delta`, else `delta * (|e| - delta/2)`.
pub fn loss_huber<F: Scalar>(actual: &[F], predicted: &[F], delta: F) -> Result<F, ConvLstmError> {
    if !(delta > F::zero()) || !delta.is_finite() {
        return Err(ConvLstmError::BadDelta { got: delta.as_f64() });
    }
    if actual.len() != predicted.len() {
        return Err(ConvLstmError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(ConvLstmError::EmptyLoss);
    }
    let half = F::lit(0.5);
    let n = F::lit(actual.len() as f64);
    let sum: F = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| {
            let e = *y - *p;
            if e.abs() <= delta {
                half * e * e
            } else {
                delta * (e.abs() - half * delta)
            }
        })
        .sum();
    Ok(sum / n)
}

/// Per-window loss value used inside training.
pub(crate) fn loss_value<F: Scalar>(kind: LossKind, delta: F, target: F, pred: F) -> F {
    let e = target - pred;
    match kind {
        LossKind::Mse => e * e,
        LossKind::Huber => {
            let half = F::lit(0.5);
            if e.abs() <= delta {
                half * e * e
            } else {
                delta * (e.abs() - half * delta)
            }
        }
    }
}

/// d(loss)/d(pred) for one window.
pub(crate) fn loss_dpred<F: Scalar>(kind: LossKind, delta: F, target: F, pred: F) -> F {
    let e = target - pred;
    match kind {
        LossKind::Mse => F::lit(2.0) * (pred - target),
        LossKind::Huber => {
            if e.abs() <= delta {
                -e
            } else {
                -delta * e.signum()
            }
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<F> {
    pub learning_rate: F,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    /// Knee of the Huber loss, in normalized target units.
    pub huber_delta: F,
    pub seed: u64,
    /// Global gradient-norm clip applied before each Adam step.
    pub grad_clip: F,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        Self {
            learning_rate: F::lit(1e-3),
            epochs: 80,
            batch_size: 32,
            loss: LossKind::Huber,
            huber_delta: F::one(),
            seed: 42,
            grad_clip: F::lit(5.0),
        }
    }
}

impl<F: Scalar> TrainConfig<F> {
    pub fn validate(&self) -> Result<(), ConvLstmError> {
        if self.epochs == 0 {
            return Err(ConvLstmError::BadConfig { reason: "epochs must be at least 1".into() });
        }
        if self.batch_size == 0 {
            return Err(ConvLstmError::BadConfig { reason: "batch size must be at least 1".into() });
        }
        if !self.learning_rate.is_finite() || self.learning_rate < F::zero() {
            return Err(ConvLstmError::BadConfig {
                reason: "learning rate must be finite and non-negative".into(),
            });
        }
        if !(self.grad_clip > F::zero()) {
            return Err(ConvLstmError::BadConfig { reason: "gradient clip must be positive".into() });
        }
        if matches!(self.loss, LossKind::Huber) && (!(self.huber_delta > F::zero()) || !self.huber_delta.is_finite()) {
            return Err(ConvLstmError::BadDelta { got: self.huber_delta.as_f64() });
        }
        Ok(())
    }
}

/// One dated model output on the original price scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionPoint {
    pub date: NaiveDate,
    pub value: f64,
}

/// Denormalized one-step-ahead predictions, one per valid window position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSeries {
    pub points: Vec<PredictionPoint>,
}

impl PredictionSeries {
    /// `date,prediction` CSV. Values print in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,prediction\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.date, p.value));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ConvLstmError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "date,prediction")) => {}
            other => {
                return Err(ConvLstmError::PredictionCsv {
                    line: 1,
                    reason: format!(
                        "expected header `date,prediction`, got `{}`",
                        other.map(|(_, l)| l).unwrap_or("")
                    ),
                })
            }
        }
        let mut points = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (date_s, value_s) = line.split_once(',').ok_or(ConvLstmError::PredictionCsv {
                line: lineno,
                reason: "expected two comma-separated fields".into(),
            })?;
            let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d").map_err(|e| {
                ConvLstmError::PredictionCsv { line: lineno, reason: format!("bad date: {e}") }
            })?;
            let value: f64 = value_s.parse().map_err(|e| ConvLstmError::PredictionCsv {
                line: lineno,
                reason: format!("bad prediction: {e}"),
            })?;
            points.push(PredictionPoint { date, value });
        }
        Ok(Self { points })
    }
}

const CHECKPOINT_VERSION: u32 = 1;

/// A trained model bundled with everything needed to predict on raw data:
/// parameters, normalization, feature selection, and window length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLstmModel<F> {
    /// Checkpoint format version; bumped on incompatible layout changes.
    pub format_version: u32,
    pub params: ConvLstmParams<F>,
    pub norm: NormParams<F>,
    pub features: Vec<FeatureColumn>,
    /// Index of the prediction target within `features`.
    pub target_col: usize,
    pub window_len: usize,
    pub train_config: TrainConfig<F>,
}

impl<F: Scalar> ConvLstmModel<F> {
    pub fn new(
        params: ConvLstmParams<F>,
        norm: NormParams<F>,
        features: Vec<FeatureColumn>,
        target_col: usize,
        window_len: usize,
        train_config: TrainConfig<F>,
    ) -> Result<Self, ConvLstmError> {
        let model = Self {
            format_version: CHECKPOINT_VERSION,
            params,
            norm,
            features,
            target_col,
            window_len,
            train_config,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ConvLstmError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(ConvLstmError::CheckpointVersion {
                got: self.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let geo = self.params.geometry;
        geo.validate()?;
        if self.params.theta.len() != geo.param_count() {
            return Err(ConvLstmError::CorruptCheckpoint {
                reason: format!(
                    "parameter vector has {} entries, geometry needs {}",
                    self.params.theta.len(),
                    geo.param_count()
                ),
            });
        }
        if self.features.len() != geo.features {
            return Err(ConvLstmError::CorruptCheckpoint {
                reason: format!(
                    "{} feature columns listed, geometry expects {}",
                    self.features.len(),
                    geo.features
                ),
            });
        }
        if self.norm.width() != geo.features {
            return Err(ConvLstmError::CorruptCheckpoint {
                reason: format!(
                    "normalization covers {} columns, geometry expects {}",
                    self.norm.width(),
                    geo.features
                ),
            });
        }
        if self.target_col >= self.features.len() {
            return Err(ConvLstmError::CorruptCheckpoint {
                reason: format!("target column {} out of range", self.target_col),
            });
        }
        if self.window_len == 0 {
            return Err(ConvLstmError::CorruptCheckpoint {
                reason: "window length must be at least 1".into(),
            });
        }
        if self.params.theta.iter().any(|v| !v.is_finite()) {
            return Err(ConvLstmError::CorruptCheckpoint {
                reason: "non-finite parameter value".into(),
            });
        }
        Ok(())
    }

    /// Serializes to the versioned JSON checkpoint format.
    ///
    /// Floats are written in shortest round-trip form, so save -> load ->
    /// save is byte-identical.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ConvLstmError> {
        // Peek at the version first so an old checkpoint reports a version
        // mismatch rather than a generic parse error.
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        if let Ok(probe) = serde_json::from_str::<VersionProbe>(text) {
            if probe.format_version != CHECKPOINT_VERSION {
                return Err(ConvLstmError::CheckpointVersion {
                    got: probe.format_version,
                    expected: CHECKPOINT_VERSION,
                });
            }
        }
        let model: Self = serde_json::from_str(text)
            .map_err(|e| ConvLstmError::CorruptCheckpoint { reason: e.to_string() })?;
        model.validate()?;
        Ok(model)
    }
}

/// Writes a model checkpoint to disk.
pub fn save_checkpoint<F: Scalar>(model: &ConvLstmModel<F>, path: &Path) -> Result<(), ConvLstmError> {
    std::fs::write(path, model.to_json())?;
    Ok(())
}

/// Reads a model checkpoint from disk.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<ConvLstmModel<F>, ConvLstmError> {
    let text = std::fs::read_to_string(path)?;
    ConvLstmModel::from_json(&text)
}

/// Runs the model over every valid window position of a series.
///
/// The k-th prediction is for the row `window_len + k` of the series (stride
/// 1, horizon 1) and is reported on the original price scale.
pub fn predict_series<F: Scalar>(
    model: &ConvLstmModel<F>,
    series: &OhlcvSeries,
) -> Result<PredictionSeries, ConvLstmError> {
    let window_len = model.window_len;
    if series.len() < window_len + 1 {
        return Err(ConvLstmError::SeriesTooShort {
            rows: series.len(),
            needed: window_len + 1,
        });
    }
    let matrix = feature_matrix::<F>(series, &model.features);
    let normalized = zscore_apply(&matrix, &model.norm)?;
    let dates: Vec<NaiveDate> = series.dates().collect();

    let mut points = Vec::with_capacity(series.len() - window_len);
    for start in 0..=(series.len() - window_len - 1) {
        let window = &normalized[start..start + window_len];
        let pred_norm = forward(window, &model.params)?;
        let value = model.norm.invert_value(model.target_col, pred_norm).as_f64();
        points.push(PredictionPoint {
            date: dates[start + window_len],
            value,
        });
    }
    Ok(PredictionSeries { points })
}

//! BPTT training for the conv-LSTM: backward pass, Adam, gradient clipping,
//! and a finite-difference gradient check.
//!
//! The backward pass mirrors the forward equations exactly; gradients live in
//! one flat vector indexed by the same layout as the parameters, so the
//! optimizer and the clip are a few lines each. Everything is seeded: a fixed
//! seed gives bit-identical parameter trajectories and loss histories.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    forward_cached, loss_dpred, loss_value, ConvLstmError, ConvLstmParams, Gate, LossKind,
    StepCache, TrainConfig,
};
use crate::scalar::Scalar;
use crate::timeseries::WindowedDataset;

/// Adam with the usual constants: beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: u32,
    learning_rate: F,
}

impl<F: Scalar> Adam<F> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(param_count: usize, learning_rate: F) -> Self {
        Self {
            m: vec![F::zero(); param_count],
            v: vec![F::zero(); param_count],
            t: 0,
            learning_rate,
        }
    }

    /// One update step; `theta` and `grads` must have the buffer's length.
    pub fn step(&mut self, theta: &mut [F], grads: &[F]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1 = F::lit(Self::BETA1);
        let b2 = F::lit(Self::BETA2);
        let eps = F::lit(Self::EPS);
        let one = F::one();
        let corr1 = one - F::lit(Self::BETA1.powi(self.t as i32));
        let corr2 = one - F::lit(Self::BETA2.powi(self.t as i32));
        for ((th, g), (m, v)) in theta
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *th = *th - self.learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Scales `grads` so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Scalar>(grads: &mut [F], max_norm: F) -> F {
    let norm = grads.iter().map(|g| *g * *g).sum::<F>().sqrt();
    if norm > max_norm && norm > F::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}

/// Accumulates dL/dtheta for one window into `grads` (laid out like theta).
///
/// `dpred` is dL/d(prediction); caches come from a `forward_cached` call with
/// `keep = true` on the same window and parameters.
pub(crate) fn backward<F: Scalar>(
    params: &ConvLstmParams<F>,
    window: &[Vec<F>],
    caches: &[StepCache<F>],
    dpred: F,
    grads: &mut [F],
) {
    let geo = params.geometry();
    let hidden = geo.hidden();
    let feats = geo.features;
    let k = geo.kernel_width;
    let off = k / 2;
    let one = F::one();

    let last_h = &caches[caches.len() - 1].h;
    let ro_w = geo.readout_w_range();
    for (slot, hv) in grads[ro_w].iter_mut().zip(last_h) {
        *slot = *slot + dpred * *hv;
    }
    grads[geo.readout_b_index()] = grads[geo.readout_b_index()] + dpred;

    let mut dh: Vec<F> = params.readout_weights().iter().map(|w| *w * dpred).collect();
    let mut dc = vec![F::zero(); hidden];
    let zeros = vec![F::zero(); hidden];

    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        let (h_prev, c_prev) = if t > 0 {
            (&caches[t - 1].h, &caches[t - 1].c)
        } else {
            (&zeros, &zeros)
        };
        let x = &window[t];

        let mut da = [
            vec![F::zero(); hidden], // input
            vec![F::zero(); hidden], // forget
            vec![F::zero(); hidden], // output
            vec![F::zero(); hidden], // candidate
        ];
        let mut dc_prev = vec![F::zero(); hidden];
        for r in 0..hidden {
            let do_r = dh[r] * cache.tanh_c[r];
            let dc_r = dc[r] + dh[r] * cache.o[r] * (one - cache.tanh_c[r] * cache.tanh_c[r]);
            let di_r = dc_r * cache.g[r];
            let dg_r = dc_r * cache.i[r];
            let df_r = dc_r * c_prev[r];
            dc_prev[r] = dc_r * cache.f[r];

            da[0][r] = di_r * cache.i[r] * (one - cache.i[r]);
            da[1][r] = df_r * cache.f[r] * (one - cache.f[r]);
            da[2][r] = do_r * cache.o[r] * (one - cache.o[r]);
            da[3][r] = dg_r * (one - cache.g[r] * cache.g[r]);
        }

        let mut dh_prev = vec![F::zero(); hidden];
        for (gate, da_g) in Gate::ALL.iter().zip(&da) {
            let kr = geo.kernel_range(*gate);
            let rr = geo.recurrent_range(*gate);
            let br = geo.bias_range(*gate);
            let rec = params.recurrent(*gate);

            for r in 0..hidden {
                let da_r = da_g[r];
                grads[br.start + r] = grads[br.start + r] + da_r;
                let row = rr.start + r * hidden;
                for m in 0..hidden {
                    grads[row + m] = grads[row + m] + da_r * h_prev[m];
                    dh_prev[m] = dh_prev[m] + rec[r * hidden + m] * da_r;
                }
            }
            for c in 0..geo.filters {
                for d in 0..k {
                    let mut acc = F::zero();
                    for j in 0..feats {
                        let xi = j + d;
                        if xi >= off && xi - off < feats {
                            acc = acc + da_g[c * feats + j] * x[xi - off];
                        }
                    }
                    let slot = kr.start + c * k + d;
                    grads[slot] = grads[slot] + acc;
                }
            }
        }

        dh = dh_prev;
        dc = dc_prev;
    }
}

/// Trains a fresh model on a windowed dataset.
///
/// Parameters initialize from `config.seed`; batches are reshuffled each
/// epoch from a stream derived from the same seed. Returns the trained
/// parameters and one mean training loss per epoch. Aborts with the epoch
/// index if the loss ever goes non-finite.
pub fn train<F: Scalar>(
    dataset: &WindowedDataset<F>,
    geometry: super::Geometry,
    config: &TrainConfig<F>,
) -> Result<(ConvLstmParams<F>, Vec<F>), ConvLstmError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ConvLstmError::EmptyDataset);
    }
    if dataset.feature_width != geometry.features {
        return Err(ConvLstmError::FeatureWidth {
            got: dataset.feature_width,
            expected: geometry.features,
        });
    }

    let mut params = ConvLstmParams::init(geometry, config.seed)?;
    // Distinct stream from the init draws so adding parameters never
    // perturbs the shuffle order.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);

    let n = dataset.len();
    let mut adam = Adam::new(params.theta().len(), config.learning_rate);
    let mut grads = vec![F::zero(); params.theta().len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss_sum = F::zero();

        for chunk in order.chunks(config.batch_size) {
            for g in grads.iter_mut() {
                *g = F::zero();
            }
            let mut batch_loss_sum = F::zero();
            for &idx in chunk {
                let w = &dataset.windows[idx];
                let (pred, caches) = forward_cached(&w.input, &params, true)?;
                batch_loss_sum =
                    batch_loss_sum + loss_value(config.loss, config.huber_delta, w.target, pred);
                let dpred = loss_dpred(config.loss, config.huber_delta, w.target, pred);
                backward(&params, &w.input, &caches, dpred, &mut grads);
            }
            if !batch_loss_sum.is_finite() {
                return Err(ConvLstmError::NonFiniteLoss { epoch });
            }
            let inv = F::one() / F::lit(chunk.len() as f64);
            for g in grads.iter_mut() {
                *g = *g * inv;
            }
            clip_global_norm(&mut grads, config.grad_clip);
            adam.step(params.theta_mut(), &grads);
            epoch_loss_sum = epoch_loss_sum + batch_loss_sum;
        }

        let epoch_loss = epoch_loss_sum / F::lit(n as f64);
        if !epoch_loss.is_finite() {
            return Err(ConvLstmError::NonFiniteLoss { epoch });
        }
        history.push(epoch_loss);
    }

    Ok((params, history))
}

/// Compares the BPTT gradient against central finite differences.
///
/// Perturbs every parameter by +-1e-5 and returns the worst relative error
/// `|g_a - g_n| / max(|g_a|, |g_n|, 1e-8)`. Diagnostic only: inputs must be
/// shape-consistent with the parameters.
pub fn grad_check<F: Scalar>(
    params: &ConvLstmParams<F>,
    window: &[Vec<F>],
    target: F,
    loss: LossKind,
    huber_delta: F,
) -> F {
    let (pred, caches) =
        forward_cached(window, params, true).expect("grad_check inputs must be shape-consistent");
    let dpred = loss_dpred(loss, huber_delta, target, pred);
    let mut analytic = vec![F::zero(); params.theta().len()];
    backward(params, window, &caches, dpred, &mut analytic);

    let mut probe = params.clone();
    let step = F::lit(1e-5);
    let two = F::lit(2.0);
    let floor = F::lit(1e-8);
    let mut worst = F::zero();
    for idx in 0..analytic.len() {
        let orig = probe.theta()[idx];

        probe.theta_mut()[idx] = orig + step;
        let (pred_plus, _) = forward_cached(window, &probe, false).expect("shape-consistent");
        let loss_plus = loss_value(loss, huber_delta, target, pred_plus);

        probe.theta_mut()[idx] = orig - step;
        let (pred_minus, _) = forward_cached(window, &probe, false).expect("shape-consistent");
        let loss_minus = loss_value(loss, huber_delta, target, pred_minus);

        probe.theta_mut()[idx] = orig;

        let numeric = (loss_plus - loss_minus) / (two * step);
        let denom = analytic[idx].abs().max(numeric.abs()).max(floor);
        let rel = (analytic[idx] - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

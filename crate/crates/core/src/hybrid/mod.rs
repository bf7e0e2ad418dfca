//! Additive hybrid forecaster: piecewise-linear trend, Fourier
//! seasonality, an autoregressive network block, lagged exogenous
//! regressor blocks and linear known-future regressors, trained under
//! Huber loss with per-parameter adaptive moments and decoupled weight
//! decay.
//!
//! The model operates on a normalized target scale internally (training
//! slice mapped to [0, 1]); `model_forward` maps predictions back. Time
//! is the raw observation index of the training series.

mod net;
mod train;

pub use net::{DenseLayer, Mlp, MlpGrad};
pub use train::{components, fit, forecast_rolling, ComponentsReport};

use thiserror::Error;

use crate::series::{Affine, SeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HybridError {
    #[error("series too short: needs more than {needed} observations, got {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("regressor {name:?} does not cover the target's months")]
    MisalignedRegressor { name: String },
    #[error("expected {expected} inputs, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("seasonality is disabled on this model")]
    SeasonalityDisabled,
    #[error("missing input for enabled component {component}")]
    MissingComponentInput { component: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Training and architecture settings. `season_terms == 0` disables the
/// seasonal component; `ar_lags == 0` the autoregressive block. The same
/// hidden widths apply to the AR block and every lagged-regressor block;
/// an empty list means a plain linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    pub n_changepoints: usize,
    /// Fraction of the training span that holds changepoints.
    pub changepoint_range: f64,
    /// Seasonal periodicity in observations (12 for monthly-yearly).
    pub season_period: f64,
    /// Fourier order; at most period/2 is resolvable on sampled data.
    pub season_terms: usize,
    pub ar_lags: usize,
    /// Lags per lagged regressor, strictly past values (lag 1 and up).
    pub reg_lags: usize,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub huber_delta: f64,
    /// L1 weight on the first-layer AR weights; 0 disables.
    pub ar_sparsity: f64,
    /// Decoupled weight decay on everything except biases and the trend
    /// level/rate.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            n_changepoints: 10,
            changepoint_range: 0.8,
            season_period: 12.0,
            season_terms: 3,
            ar_lags: 0,
            reg_lags: 0,
            hidden_layers: vec![],
            learning_rate: 0.003,
            epochs: 500,
            batch_size: 32,
            huber_delta: 1.0,
            ar_sparsity: 0.0,
            weight_decay: 1e-4,
            seed: 42,
        }
    }
}

impl HybridConfig {
    pub(crate) fn validate(&self) -> Result<(), HybridError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(HybridError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !self.huber_delta.is_finite() || self.huber_delta <= 0.0 {
            return Err(HybridError::InvalidConfig("huber_delta must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(HybridError::InvalidConfig("batch_size must be positive".into()));
        }
        if self.season_terms > 0 && !(self.season_period.is_finite() && self.season_period > 1.0) {
            return Err(HybridError::InvalidConfig(
                "season_period must exceed 1 when seasonality is enabled".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.changepoint_range) {
            return Err(HybridError::InvalidConfig(
                "changepoint_range must lie in [0, 1]".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(HybridError::InvalidConfig("hidden layer widths must be positive".into()));
        }
        let penalty_ok = |v: f64| v.is_finite() && v >= 0.0;
        if !penalty_ok(self.ar_sparsity) || !penalty_ok(self.weight_decay) {
            return Err(HybridError::InvalidConfig(
                "penalty weights must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Lagged exogenous regressor block: its own network plus the affine
/// normalization of the raw regressor values.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBlock {
    pub name: String,
    pub net: Mlp,
    pub norm: Affine,
}

/// Known-future (or 0/1 event) regressor: a single linear weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FutureBlock {
    pub name: String,
    pub weight: f64,
    pub norm: Affine,
}

/// Fitted additive model. Immutable after training; forward evaluation
/// is pure and safe to run concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    /// Initial trend growth rate.
    pub base_rate: f64,
    /// Trend level at t = 0 (normalized scale).
    pub offset: f64,
    /// Per-changepoint growth-rate adjustments.
    pub deltas: Vec<f64>,
    pub changepoint_times: Vec<f64>,
    pub season_period: f64,
    pub fourier_a: Vec<f64>,
    pub fourier_b: Vec<f64>,
    pub ar_net: Option<Mlp>,
    pub ar_lags: usize,
    pub reg_lags: usize,
    pub lagged_regressors: Vec<RegressorBlock>,
    pub future_regressors: Vec<FutureBlock>,
    pub target_norm: Affine,
    pub huber_delta: f64,
    /// Mean training loss per epoch, recorded during `fit`.
    pub train_loss: Vec<f64>,
}

impl HybridModel {
    /// Bare trend-only model, convenient for tests and as a fit skeleton.
    pub fn trend_only(base_rate: f64, offset: f64) -> Self {
        Self {
            base_rate,
            offset,
            deltas: vec![],
            changepoint_times: vec![],
            season_period: 12.0,
            fourier_a: vec![],
            fourier_b: vec![],
            ar_net: None,
            ar_lags: 0,
            reg_lags: 0,
            lagged_regressors: vec![],
            future_regressors: vec![],
            target_norm: Affine::identity(),
            huber_delta: 1.0,
            train_loss: vec![],
        }
    }

    pub fn seasonality_enabled(&self) -> bool {
        !self.fourier_a.is_empty()
    }

    /// Piecewise-linear trend at time `t`: the growth rate picks up each
    /// delta past its changepoint, with the offset correction folded in
    /// so the function is continuous.
    pub fn trend_eval(&self, t: f64) -> f64 {
        let mut value = self.offset + self.base_rate * t;
        for (delta, cp) in self.deltas.iter().zip(&self.changepoint_times) {
            value += delta * (t - cp).max(0.0);
        }
        value
    }

    /// Fourier seasonality at time `t`. The angle uses `t mod period` so
    /// periodicity is exact, not just up to rounding.
    pub fn seasonality_eval(&self, t: f64) -> Result<f64, HybridError> {
        if !self.seasonality_enabled() {
            return Err(HybridError::SeasonalityDisabled);
        }
        let phase = t.rem_euclid(self.season_period);
        let base = std::f64::consts::TAU * phase / self.season_period;
        let mut value = 0.0;
        for (j, (a, b)) in self.fourier_a.iter().zip(&self.fourier_b).enumerate() {
            let angle = base * (j + 1) as f64;
            value += a * angle.cos() + b * angle.sin();
        }
        Ok(value)
    }

    /// Autoregressive block on already-normalized lag values (oldest to
    /// newest). With no hidden layers this is exactly the linear AR map
    /// `s + sum phi_i lag_i`.
    pub fn ar_forward(&self, lags: &[f64]) -> Result<f64, HybridError> {
        let net = self
            .ar_net
            .as_ref()
            .ok_or(HybridError::MissingComponentInput { component: "autoregression" })?;
        if lags.len() != self.ar_lags {
            return Err(HybridError::DimensionMismatch {
                expected: self.ar_lags,
                actual: lags.len(),
            });
        }
        Ok(net.forward(lags))
    }

    /// Full additive prediction on the original target scale. Raw lag
    /// windows (oldest to newest) and regressor values are normalized
    /// internally; disabled components contribute nothing.
    pub fn model_forward(
        &self,
        t: f64,
        ar_lags_raw: &[f64],
        reg_lags_raw: &[Vec<f64>],
        future_raw: &[f64],
    ) -> Result<f64, HybridError> {
        let mut total = self.trend_eval(t);
        if self.seasonality_enabled() {
            total += self.seasonality_eval(t)?;
        }
        if self.ar_net.is_some() {
            if ar_lags_raw.len() != self.ar_lags {
                return Err(HybridError::MissingComponentInput { component: "autoregression" });
            }
            let normed: Vec<f64> = ar_lags_raw.iter().map(|v| self.target_norm.apply(*v)).collect();
            total += self.ar_forward(&normed)?;
        }
        if !self.lagged_regressors.is_empty() {
            if reg_lags_raw.len() != self.lagged_regressors.len() {
                return Err(HybridError::MissingComponentInput { component: "lagged regressors" });
            }
            for (block, window) in self.lagged_regressors.iter().zip(reg_lags_raw) {
                if window.len() != self.reg_lags {
                    return Err(HybridError::DimensionMismatch {
                        expected: self.reg_lags,
                        actual: window.len(),
                    });
                }
                let normed: Vec<f64> = window.iter().map(|v| block.norm.apply(*v)).collect();
                total += block.net.forward(&normed);
            }
        }
        if !self.future_regressors.is_empty() {
            if future_raw.len() != self.future_regressors.len() {
                return Err(HybridError::MissingComponentInput { component: "future regressors" });
            }
            for (block, value) in self.future_regressors.iter().zip(future_raw) {
                total += block.weight * block.norm.apply(*value);
            }
        }
        Ok(self.target_norm.invert(total))
    }

    /// Prediction on the normalized scale from an already-normalized
    /// sample, plus caches for backpropagation.
    pub(crate) fn forward_sample(&self, sample: &TrainSample) -> (f64, SampleCache) {
        let mut total = self.trend_eval(sample.t);
        if self.seasonality_enabled() {
            total += self.seasonality_eval(sample.t).expect("seasonality enabled");
        }
        let ar_cache = self.ar_net.as_ref().map(|net| {
            let (v, cache) = net.forward_cached(&sample.ar_inputs);
            total += v;
            cache
        });
        let mut reg_caches = Vec::with_capacity(self.lagged_regressors.len());
        for (block, window) in self.lagged_regressors.iter().zip(&sample.reg_inputs) {
            let (v, cache) = block.net.forward_cached(window);
            total += v;
            reg_caches.push(cache);
        }
        for (block, value) in self.future_regressors.iter().zip(&sample.future_inputs) {
            total += block.weight * value;
        }
        (total, SampleCache { ar: ar_cache, regs: reg_caches })
    }

    /// Flat parameter vector: trend rate/level, deltas, Fourier pairs,
    /// AR net (weights row-major then biases per layer), regressor nets,
    /// future weights. The order is part of the trained-model contract
    /// for optimizer state and gradient checks.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = vec![self.base_rate, self.offset];
        out.extend_from_slice(&self.deltas);
        out.extend_from_slice(&self.fourier_a);
        out.extend_from_slice(&self.fourier_b);
        let mut push_net = |net: &Mlp| {
            for layer in &net.layers {
                for row in &layer.weights {
                    out.extend_from_slice(row);
                }
                out.extend_from_slice(&layer.biases);
            }
        };
        if let Some(net) = &self.ar_net {
            push_net(net);
        }
        for block in &self.lagged_regressors {
            push_net(&block.net);
        }
        for block in &self.future_regressors {
            out.push(block.weight);
        }
        out
    }

    /// Inverse of [`param_vector`]; panics on length mismatch.
    pub fn set_param_vector(&mut self, params: &[f64]) {
        let mut pos = 0;
        let mut take = |n: usize, params: &[f64]| {
            let s = params[pos..pos + n].to_vec();
            pos += n;
            s
        };
        let head = take(2, params);
        self.base_rate = head[0];
        self.offset = head[1];
        let n_deltas = self.deltas.len();
        self.deltas = take(n_deltas, params);
        let n_fa = self.fourier_a.len();
        self.fourier_a = take(n_fa, params);
        let n_fb = self.fourier_b.len();
        self.fourier_b = take(n_fb, params);
        if let Some(net) = &mut self.ar_net {
            for layer in &mut net.layers {
                for row in &mut layer.weights {
                    let n = row.len();
                    *row = take(n, params);
                }
                let n = layer.biases.len();
                layer.biases = take(n, params);
            }
        }
        for block in &mut self.lagged_regressors {
            for layer in &mut block.net.layers {
                for row in &mut layer.weights {
                    let n = row.len();
                    *row = take(n, params);
                }
                let n = layer.biases.len();
                layer.biases = take(n, params);
            }
        }
        for block in &mut self.future_regressors {
            let w = take(1, params);
            block.weight = w[0];
        }
        assert_eq!(pos, params.len(), "parameter vector length mismatch");
    }

    /// True per flat-vector slot when decoupled weight decay applies:
    /// network weight matrices, Fourier coefficients, trend deltas and
    /// future weights decay; biases and the trend level/rate do not.
    pub(crate) fn decay_mask(&self) -> Vec<bool> {
        let mut out = vec![false, false];
        out.extend(std::iter::repeat_n(true, self.deltas.len()));
        out.extend(std::iter::repeat_n(true, self.fourier_a.len() + self.fourier_b.len()));
        let push_net = |net: &Mlp, out: &mut Vec<bool>| {
            for layer in &net.layers {
                for row in &layer.weights {
                    out.extend(std::iter::repeat_n(true, row.len()));
                }
                out.extend(std::iter::repeat_n(false, layer.biases.len()));
            }
        };
        if let Some(net) = &self.ar_net {
            push_net(net, &mut out);
        }
        for block in &self.lagged_regressors {
            push_net(&block.net, &mut out);
        }
        out.extend(std::iter::repeat_n(true, self.future_regressors.len()));
        out
    }
}

/// Backward-pass caches for one sample.
pub(crate) struct SampleCache {
    ar: Option<net::MlpCache>,
    regs: Vec<net::MlpCache>,
}

/// One training sample on the normalized scale. `t` is the observation
/// index in the training series; lag windows run oldest to newest.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub t: f64,
    pub target_norm: f64,
    pub ar_inputs: Vec<f64>,
    pub reg_inputs: Vec<Vec<f64>>,
    pub future_inputs: Vec<f64>,
}

/// Gradients mirroring [`HybridModel`]'s trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridGradients {
    pub base_rate: f64,
    pub offset: f64,
    pub deltas: Vec<f64>,
    pub fourier_a: Vec<f64>,
    pub fourier_b: Vec<f64>,
    pub ar_net: Option<MlpGrad>,
    pub lagged_regressors: Vec<MlpGrad>,
    pub future_weights: Vec<f64>,
}

impl HybridGradients {
    pub(crate) fn zeroed(model: &HybridModel) -> Self {
        Self {
            base_rate: 0.0,
            offset: 0.0,
            deltas: vec![0.0; model.deltas.len()],
            fourier_a: vec![0.0; model.fourier_a.len()],
            fourier_b: vec![0.0; model.fourier_b.len()],
            ar_net: model.ar_net.as_ref().map(Mlp::grad_zeroed),
            lagged_regressors: model
                .lagged_regressors
                .iter()
                .map(|b| b.net.grad_zeroed())
                .collect(),
            future_weights: vec![0.0; model.future_regressors.len()],
        }
    }

    /// Flatten in the exact order of [`HybridModel::param_vector`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = vec![self.base_rate, self.offset];
        out.extend_from_slice(&self.deltas);
        out.extend_from_slice(&self.fourier_a);
        out.extend_from_slice(&self.fourier_b);
        let push_net = |g: &MlpGrad, out: &mut Vec<f64>| {
            for (w, b) in g.weights.iter().zip(&g.biases) {
                for row in w {
                    out.extend_from_slice(row);
                }
                out.extend_from_slice(b);
            }
        };
        if let Some(g) = &self.ar_net {
            push_net(g, &mut out);
        }
        for g in &self.lagged_regressors {
            push_net(g, &mut out);
        }
        out.extend_from_slice(&self.future_weights);
        out
    }
}

/// Huber loss: quadratic inside `delta`, linear outside, C1 at the join.
pub fn huber_loss(residual: f64, delta: f64) -> f64 {
    let a = residual.abs();
    if a <= delta {
        0.5 * residual * residual
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// d huber / d residual.
pub fn huber_derivative(residual: f64, delta: f64) -> f64 {
    residual.clamp(-delta, delta)
}

/// Exact analytic gradient of the mean Huber loss over `batch` with
/// respect to every trainable parameter, by reverse-mode accumulation.
/// Penalty terms (sparsity, weight decay) are handled by the optimizer,
/// not here, so this is checkable against finite differences alone.
pub fn gradients(model: &HybridModel, batch: &[TrainSample]) -> HybridGradients {
    gradients_with_loss(model, batch).0
}

pub(crate) fn gradients_with_loss(
    model: &HybridModel,
    batch: &[TrainSample],
) -> (HybridGradients, f64) {
    assert!(!batch.is_empty(), "gradient batch must be nonempty");
    let mut grads = HybridGradients::zeroed(model);
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for sample in batch {
        let (pred, cache) = model.forward_sample(sample);
        let residual = pred - sample.target_norm;
        loss += huber_loss(residual, model.huber_delta) * scale;
        let g = huber_derivative(residual, model.huber_delta) * scale;

        grads.offset += g;
        grads.base_rate += g * sample.t;
        for (slot, cp) in grads.deltas.iter_mut().zip(&model.changepoint_times) {
            *slot += g * (sample.t - cp).max(0.0);
        }
        if model.seasonality_enabled() {
            let phase = sample.t.rem_euclid(model.season_period);
            let base = std::f64::consts::TAU * phase / model.season_period;
            for j in 0..model.fourier_a.len() {
                let angle = base * (j + 1) as f64;
                grads.fourier_a[j] += g * angle.cos();
                grads.fourier_b[j] += g * angle.sin();
            }
        }
        if let (Some(net), Some(c)) = (&model.ar_net, &cache.ar) {
            net.backward(c, g, grads.ar_net.as_mut().unwrap(), None);
        }
        for ((block, c), slot) in model
            .lagged_regressors
            .iter()
            .zip(&cache.regs)
            .zip(&mut grads.lagged_regressors)
        {
            block.net.backward(c, g, slot, None);
        }
        for (slot, value) in grads.future_weights.iter_mut().zip(&sample.future_inputs) {
            *slot += g * value;
        }
    }
    (grads, loss)
}

/// Mean Huber loss of the model on a normalized batch; the forward-only
/// path used by finite-difference gradient checks.
pub fn batch_loss(model: &HybridModel, batch: &[TrainSample]) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    batch
        .iter()
        .map(|s| huber_loss(model.forward_sample(s).0 - s.target_norm, model.huber_delta) * scale)
        .sum()
}

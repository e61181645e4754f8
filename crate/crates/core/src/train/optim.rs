//! AdamW and percentile-of-history gradient clipping.

use alloc::vec::Vec;

use super::{GradTape, TrainError};
use crate::eval::nearest_rank;
use crate::math::{self, Real};
use crate::nn::CrnModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 5e-5, weight_decay: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments, shaped like the model, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: CrnModel<S>,
    pub v: CrnModel<S>,
    pub step: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(model: &CrnModel<S>) -> Self {
        AdamState { m: model.zeros_like(), v: model.zeros_like(), step: 0 }
    }
}

/// One AdamW update: decoupled decay `theta -= lr * wd * theta`, then the
/// bias-corrected Adam step.
pub fn adamw_step<S: Real>(
    model: &mut CrnModel<S>,
    grads: &GradTape<S>,
    state: &mut AdamState<S>,
    cfg: &AdamWConfig,
) -> Result<(), TrainError> {
    let shapes_match = |other: &CrnModel<S>| {
        model.tensors().iter().zip(other.tensors()).all(|(a, b)| a.shape() == b.shape()) && model.n_out() == other.n_out()
    };
    if !shapes_match(&grads.grads) || !shapes_match(&state.m) || !shapes_match(&state.v) {
        return Err(TrainError::ShapeMismatch("optimizer state does not match the model".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - math::powf(cfg.beta1, t);
    let c2 = 1.0 - math::powf(cfg.beta2, t);
    let decay = 1.0 - cfg.lr * cfg.weight_decay;
    let params = model.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.grads.tensors()).zip(ms).zip(vs) {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i].to_f64();
            let mi = cfg.beta1 * m[i].to_f64() + (1.0 - cfg.beta1) * gi;
            let vi = cfg.beta2 * v[i].to_f64() + (1.0 - cfg.beta2) * gi * gi;
            m[i] = S::from_f64(mi);
            v[i] = S::from_f64(vi);
            let theta = p[i].to_f64() * decay;
            p[i] = S::from_f64(theta - cfg.lr * (mi / c1) / (math::sqrt(vi / c2) + cfg.eps));
        }
    }
    Ok(())
}

/// Nearest-rank percentile of the observed gradient norms.
pub fn autoclip_threshold(history: &[f64], percentile: f64) -> f64 {
    let mut sorted: Vec<f64> = history.to_vec();
    sorted.sort_by(f64::total_cmp);
    nearest_rank(&sorted, percentile)
}

/// Clips each gradient to a low percentile of every norm seen so far,
/// the current one included.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoClip {
    percentile: f64,
    history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipOutcome {
    pub raw_norm: f64,
    pub threshold: f64,
    pub clipped_norm: f64,
}

impl AutoClip {
    pub fn new(percentile: f64) -> Self {
        AutoClip { percentile, history: Vec::new() }
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Records the gradient norm and rescales the gradient to at most the
    /// current threshold.
    pub fn clip<S: Real>(&mut self, grads: &mut GradTape<S>) -> ClipOutcome {
        let raw_norm = grads.norm();
        self.history.push(raw_norm);
        let threshold = autoclip_threshold(&self.history, self.percentile);
        let clipped_norm = if raw_norm > threshold && raw_norm > 0.0 {
            grads.scale(threshold / raw_norm);
            threshold
        } else {
            raw_norm
        };
        ClipOutcome { raw_norm, threshold, clipped_norm }
    }
}

//! Central finite-difference check of [`backward`](super::backward).

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{backward, batch_loss, LossKind, SeqRef, TrainError};
use crate::nn::CrnModel;
use crate::rng;

/// Denominator floor of [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Tensors up to this size are checked at every coordinate.
    pub full_tensor_max: usize,
    /// Coordinates sampled from each larger tensor.
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { eps: 1e-5, full_tensor_max: 256, samples_per_tensor: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    /// Names of the tensors that were probed.
    pub fn tensors(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.entries.iter().map(|e| e.tensor.as_str()).collect();
        v.dedup();
        v
    }
}

/// Compares analytic gradients with `(L(p + eps) - L(p - eps)) / 2 eps` on
/// every tensor of the model.
pub fn gradient_check(
    model: &CrnModel<f64>,
    batch: &[SeqRef<'_, f64>],
    kind: LossKind,
    alpha: f64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, TrainError> {
    let (loss, tape) = backward(model, batch, kind, alpha)?;
    let names = model.tensor_names();
    let grads = tape.grads.tensors();
    let mut probe = model.clone();
    let mut r = rng::rng_for(cfg.seed);
    let mut entries = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = grads[ti].len();
        let coords: Vec<usize> = if len <= cfg.full_tensor_max {
            (0..len).collect()
        } else {
            (0..cfg.samples_per_tensor).map(|_| r.random_range(0..len)).collect()
        };
        for i in coords {
            let orig = probe.tensors()[ti].data()[i];
            probe.tensors_mut()[ti].data_mut()[i] = orig + cfg.eps;
            let up = batch_loss(&probe, batch, kind, alpha)?;
            probe.tensors_mut()[ti].data_mut()[i] = orig - cfg.eps;
            let down = batch_loss(&probe, batch, kind, alpha)?;
            probe.tensors_mut()[ti].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let analytic = grads[ti].data()[i];
            entries.push(GradCheckEntry { tensor: name.clone(), index: i, analytic, numeric, rel_err: relative_error(analytic, numeric) });
        }
    }
    Ok(GradCheckReport { loss, entries })
}

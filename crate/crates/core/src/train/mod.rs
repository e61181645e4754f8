//! Losses, gradients, optimizer and the training loop.

mod gradcheck;
mod loss;
mod optim;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dsp::{self, StftConfig, N_FEATURES};
use crate::eval::{self, EvalError};
use crate::math::Real;
use crate::nn::{backward_batch, forward_batch, CrnModel, HeadKind, NnError};
use crate::rng::{self, streams};
use crate::synth::TrainingExample;

pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckEntry, GradCheckReport};
pub use loss::{bce_loss, frame_losses, mae_loss, multi_loss, LossKind, DEFAULT_ALPHA, PRED_CLAMP};
pub use optim::{adamw_step, autoclip_threshold, AdamState, AdamWConfig, AutoClip, ClipOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("prediction length {pred} does not match target length {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("loss needs {expected} outputs, got {got}")]
    WrongOutputArity { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Parameter gradients, shaped exactly like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape<S> {
    pub grads: CrnModel<S>,
}

impl<S: Real> GradTape<S> {
    pub fn zeros(model: &CrnModel<S>) -> Self {
        GradTape { grads: model.zeros_like() }
    }

    /// Global L2 norm over all parameters.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.grads.sq_norm())
    }

    pub fn scale(&mut self, s: f64) {
        let s = S::from_f64(s);
        for t in self.grads.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.is_finite()
    }
}

/// One training sequence: `[T, 64]` features with aligned targets.
#[derive(Debug, Clone, Copy)]
pub struct SeqRef<'a, S> {
    pub features: &'a [S],
    pub vad: &'a [f64],
    pub vnr_unit: &'a [f64],
}

/// An owned clip prepared for training or validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub features: Vec<f32>,
    pub vad: Vec<f64>,
    pub vnr_unit: Vec<f64>,
    pub snr_db: f64,
}

impl Sequence {
    pub fn n_frames(&self) -> usize {
        self.vad.len()
    }

    pub fn slice(&self, start: usize, len: usize) -> SeqRef<'_, f32> {
        SeqRef {
            features: &self.features[start * N_FEATURES..(start + len) * N_FEATURES],
            vad: &self.vad[start..start + len],
            vnr_unit: &self.vnr_unit[start..start + len],
        }
    }

    pub fn as_ref(&self) -> SeqRef<'_, f32> {
        self.slice(0, self.n_frames())
    }

    /// Log-mel features of the mixture paired with the example's labels.
    pub fn from_example(ex: &TrainingExample, stft: StftConfig) -> Result<Self, TrainError> {
        let feats = dsp::clip_features(&ex.mixture, stft).map_err(|e| TrainError::ShapeMismatch(alloc::format!("{e}")))?;
        if feats.n_frames() != ex.labels.len() {
            return Err(TrainError::LengthMismatch { pred: feats.n_frames(), target: ex.labels.len() });
        }
        Ok(Sequence { features: feats.to_f32(), vad: ex.labels.vad.clone(), vnr_unit: ex.labels.vnr_unit.clone(), snr_db: ex.spec.snr_db })
    }
}

fn check_batch<S: Real>(model: &CrnModel<S>, batch: &[SeqRef<'_, S>], kind: LossKind) -> Result<usize, TrainError> {
    if model.heads() != kind.heads() {
        return Err(TrainError::WrongOutputArity { expected: kind.heads().len(), got: model.n_out() });
    }
    let first = batch.first().ok_or(TrainError::EmptyDataset)?;
    let t_len = first.vad.len();
    for s in batch {
        if s.vad.len() != t_len || s.vnr_unit.len() != t_len || s.features.len() != t_len * N_FEATURES {
            return Err(TrainError::ShapeMismatch(alloc::format!(
                "sequence with {} features, {} vad and {} vnr frames in a batch of {t_len}-frame sequences",
                s.features.len(),
                s.vad.len(),
                s.vnr_unit.len()
            )));
        }
    }
    if t_len == 0 {
        return Err(TrainError::ShapeMismatch("empty sequence".into()));
    }
    Ok(t_len)
}

/// Mean loss over all frames of all sequences; optionally the derivative
/// of that mean w.r.t. every output.
fn loss_and_output_grad<S: Real>(
    outputs: &[S],
    batch: &[SeqRef<'_, S>],
    t_len: usize,
    kind: LossKind,
    alpha: f64,
    mut d_out: Option<&mut [S]>,
) -> Result<f64, TrainError> {
    let n_out = kind.heads().len();
    let b = batch.len();
    let norm = 1.0 / (t_len * b) as f64;
    let mut total = 0.0;
    let mut o = [0.0; 2];
    let mut g = [0.0; 2];
    for t in 0..t_len {
        for (bi, s) in batch.iter().enumerate() {
            let row = (t * b + bi) * n_out;
            for k in 0..n_out {
                o[k] = outputs[row + k].to_f64();
            }
            total += loss::frame_loss(kind, alpha, &o[..n_out], s.vad[t], s.vnr_unit[t], &mut g[..n_out]);
            if let Some(d) = d_out.as_deref_mut() {
                for k in 0..n_out {
                    d[row + k] = S::from_f64(g[k] * norm);
                }
            }
        }
    }
    let loss = total * norm;
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok(loss)
}

/// Forward-only batch loss.
pub fn batch_loss<S: Real>(model: &CrnModel<S>, batch: &[SeqRef<'_, S>], kind: LossKind, alpha: f64) -> Result<f64, TrainError> {
    let t_len = check_batch(model, batch, kind)?;
    let feats: Vec<&[S]> = batch.iter().map(|s| s.features).collect();
    let cache = forward_batch(model, &feats, t_len)?;
    loss_and_output_grad(cache.outputs(), batch, t_len, kind, alpha, None)
}

/// Loss and its gradient w.r.t. every parameter. The loss is the mean over
/// frames and sequences, so duplicating a sequence leaves both unchanged.
pub fn backward<S: Real>(
    model: &CrnModel<S>,
    batch: &[SeqRef<'_, S>],
    kind: LossKind,
    alpha: f64,
) -> Result<(f64, GradTape<S>), TrainError> {
    let t_len = check_batch(model, batch, kind)?;
    let feats: Vec<&[S]> = batch.iter().map(|s| s.features).collect();
    let cache = forward_batch(model, &feats, t_len)?;
    let mut d_out = vec![S::ZERO; cache.outputs().len()];
    let loss = loss_and_output_grad(cache.outputs(), batch, t_len, kind, alpha, Some(&mut d_out))?;
    let mut tape = GradTape::zeros(model);
    backward_batch(model, &cache, &d_out, &mut tape.grads)?;
    if !tape.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok((loss, tape))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub alpha: f64,
    pub optimizer: AdamWConfig,
    /// Sequences per optimizer step.
    pub batch_clips: usize,
    /// Training crop length; longer clips are cropped at a random offset.
    pub clip_len_s: f64,
    pub clip_percentile: f64,
    /// Validations without improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub stft: StftConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_kind: LossKind::VnrMae,
            alpha: DEFAULT_ALPHA,
            optimizer: AdamWConfig::default(),
            batch_clips: 50,
            clip_len_s: 10.0,
            clip_percentile: 10.0,
            patience: 10,
            max_epochs: 100,
            seed: 0,
            stft: StftConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrainError::InvalidConfig("alpha must lie in [0, 1]"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(TrainError::InvalidConfig("learning rate must be positive"));
        }
        if self.batch_clips == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(TrainError::InvalidConfig("batch size, epoch limit and patience must be positive"));
        }
        if !(self.clip_percentile > 0.0 && self.clip_percentile <= 100.0) {
            return Err(TrainError::InvalidConfig("clip percentile must lie in (0, 100]"));
        }
        if !(self.clip_len_s > 0.0) {
            return Err(TrainError::InvalidConfig("clip length must be positive"));
        }
        self.stft.validate().map_err(|_| TrainError::InvalidConfig("invalid STFT configuration"))
    }

    /// Crop length in frames.
    pub fn crop_frames(&self) -> usize {
        let samples = libm::round(self.clip_len_s * crate::SAMPLE_RATE as f64) as usize;
        self.stft.frame_count(samples).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub clip_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_auc: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_auc: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot with the best validation AUC.
    pub model: CrnModel<f32>,
    /// Optimizer state at the end of training.
    pub optimizer: AdamState<f32>,
    pub history: TrainHistory,
}

/// Progress notifications from [`train_loop_with`].
#[derive(Debug, Clone, Copy)]
pub enum Progress<'a> {
    Step(&'a StepRecord),
    Epoch(&'a EpochRecord),
}

/// Head used for validation: VNR when present, else the first output.
pub fn validation_head(model: &CrnModel<f32>) -> usize {
    model.head_index(HeadKind::Vnr).unwrap_or(0)
}

/// Runs the model over full sequences, grouping equal lengths into
/// batches. Returns `[T, n_out]` outputs per sequence.
pub fn predict_sequences(model: &CrnModel<f32>, seqs: &[&[f32]], max_batch: usize) -> Result<Vec<Vec<f32>>, TrainError> {
    let mut out: Vec<Vec<f32>> = vec![Vec::new(); seqs.len()];
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by_key(|&i| seqs[i].len());
    for group in order.chunk_by(|&a, &b| seqs[a].len() == seqs[b].len()) {
        for chunk in group.chunks(max_batch.max(1)) {
            let t_len = seqs[chunk[0]].len() / N_FEATURES;
            let feats: Vec<&[f32]> = chunk.iter().map(|&i| seqs[i]).collect();
            let cache = forward_batch(model, &feats, t_len)?;
            for (b, &i) in chunk.iter().enumerate() {
                out[i] = cache.sequence_output(b);
            }
        }
    }
    Ok(out)
}

/// Pooled frame AUC of the validation head against the VAD reference
/// (`vad > 0.5`).
pub fn validation_auc(model: &CrnModel<f32>, val: &[Sequence]) -> Result<f64, TrainError> {
    let head = validation_head(model);
    let n_out = model.n_out();
    let seqs: Vec<&[f32]> = val.iter().map(|s| s.features.as_slice()).collect();
    let preds = predict_sequences(model, &seqs, 16)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (p, s) in preds.iter().zip(val) {
        scores.extend(p.chunks_exact(n_out).map(|o| o[head] as f64));
        labels.extend(s.vad.iter().map(|&v| v > 0.5));
    }
    Ok(eval::roc_auc(&scores, &labels)?.auc)
}

/// Training with the default validator ([`validation_auc`] on `val`).
pub fn train_loop(cfg: &TrainConfig, train: &[Sequence], val: &[Sequence]) -> Result<TrainOutcome, TrainError> {
    if val.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    train_loop_with(cfg, train, |m| validation_auc(m, val), |_| {})
}

/// Shuffled mini-batch training with AutoClip and AdamW; validates once per
/// epoch, keeps the best snapshot and stops after `patience` validations
/// without improvement.
pub fn train_loop_with<V, O>(cfg: &TrainConfig, train: &[Sequence], mut validate: V, mut observe: O) -> Result<TrainOutcome, TrainError>
where
    V: FnMut(&CrnModel<f32>) -> Result<f64, TrainError>,
    O: FnMut(Progress<'_>),
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if train.iter().any(|s| s.n_frames() == 0) {
        return Err(TrainError::ShapeMismatch("training sequence without frames".into()));
    }
    let mut model = CrnModel::<f32>::new(cfg.loss_kind.heads(), cfg.seed)?;
    let mut adam = AdamState::new(&model);
    let mut clip = AutoClip::new(cfg.clip_percentile);
    let mut history = TrainHistory { best_auc: f64::NEG_INFINITY, ..TrainHistory::default() };
    let mut best = model.clone();
    let mut since_best = 0;
    let crop = cfg.crop_frames();
    let mut step = 0;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::rng_for(rng::derive_path(cfg.seed, &[streams::SHUFFLE, epoch as u64])));
        let mut loss_sum = 0.0;
        let mut n_steps = 0;
        for chunk in order.chunks(cfg.batch_clips) {
            let t_len = chunk.iter().map(|&i| train[i].n_frames()).min().unwrap_or(0).min(crop);
            let batch: Vec<SeqRef<'_, f32>> = chunk
                .iter()
                .map(|&i| {
                    let s = &train[i];
                    let slack = s.n_frames() - t_len;
                    let start = if slack == 0 {
                        0
                    } else {
                        let mut r = rng::rng_for(rng::derive_path(cfg.seed, &[streams::CROP, epoch as u64, i as u64]));
                        r.random_range(0..=slack)
                    };
                    s.slice(start, t_len)
                })
                .collect();
            let (loss, mut tape) = backward(&model, &batch, cfg.loss_kind, cfg.alpha)?;
            let c = clip.clip(&mut tape);
            adamw_step(&mut model, &tape, &mut adam, &cfg.optimizer)?;
            let rec = StepRecord { epoch, step, loss, grad_norm: c.raw_norm, clip_threshold: c.threshold };
            observe(Progress::Step(&rec));
            history.steps.push(rec);
            loss_sum += loss;
            n_steps += 1;
            step += 1;
        }
        let auc = validate(&model)?;
        let improved = auc > history.best_auc;
        if improved {
            history.best_auc = auc;
            history.best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let rec = EpochRecord { epoch, mean_loss: loss_sum / n_steps as f64, val_auc: auc, improved };
        observe(Progress::Epoch(&rec));
        history.epochs.push(rec);
        if since_best >= cfg.patience {
            history.stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome { model: best, optimizer: adam, history })
}

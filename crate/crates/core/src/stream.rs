//! Sample-in, decision-out streaming pipeline: framing, log-mel features,
//! one network step per frame and the trailing percentile filter.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::audio::AudioClip;
use crate::dsp::{self, DspError, FreqWeighting, StftConfig, StftPlan, LOG_FLOOR, N_FEATURES};
use crate::eval::{self, TrailingPercentile};
use crate::math;
use crate::nn::{crn_forward, crn_step, CrnModel, NnError, StreamState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StreamError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Incremental log-mel extraction. Emits a frame as soon as its last
/// sample arrives, so frame `n` covers samples `[n*hop, n*hop + frame_len)`
/// exactly as in the batch STFT.
#[derive(Debug, Clone)]
pub struct FeatureStream {
    plan: StftPlan,
    fb: FreqWeighting,
    pending: Vec<f64>,
    scratch: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    mag2: Vec<f64>,
    energies: Vec<f64>,
}

impl FeatureStream {
    pub fn new(stft: StftConfig) -> Result<Self, DspError> {
        let plan = StftPlan::new(stft)?;
        Ok(FeatureStream {
            plan,
            fb: dsp::feature_filterbank(stft.frame_len),
            pending: Vec::with_capacity(2 * stft.frame_len),
            scratch: Vec::with_capacity(stft.frame_len),
            spectrum: vec![Complex64::new(0.0, 0.0); stft.n_bins()],
            mag2: Vec::with_capacity(stft.n_bins()),
            energies: vec![0.0; N_FEATURES],
        })
    }

    /// Feeds samples; `emit` receives every completed 64-value frame.
    pub fn push(&mut self, samples: &[f32], mut emit: impl FnMut(&[f64])) {
        let cfg = self.plan.config();
        self.pending.extend(samples.iter().map(|&s| s as f64));
        let mut start = 0;
        while self.pending.len() - start >= cfg.frame_len {
            self.plan.frame_spectrum(&self.pending[start..start + cfg.frame_len], &mut self.scratch, &mut self.spectrum);
            dsp::spectrum_band_energy(&self.spectrum, &self.fb, &mut self.mag2, &mut self.energies);
            for e in self.energies.iter_mut() {
                *e = math::log10(e.max(LOG_FLOOR));
            }
            emit(&self.energies);
            start += cfg.hop;
        }
        self.pending.drain(..start.min(self.pending.len()));
    }

    pub fn reset(&mut self) {
        self.pending.clear();
    }
}

/// Outputs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame: usize,
    /// Raw network outputs, one per head.
    pub raw: Vec<f32>,
    /// Post-processed outputs, one per head; empty when disabled.
    pub post: Vec<f64>,
}

/// Settings of the trailing percentile filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostConfig {
    pub window_frames: usize,
    pub percentile: f64,
}

impl PostConfig {
    /// 0.4 s window, 90th percentile, at the given hop.
    pub fn standard(stft: &StftConfig) -> Self {
        PostConfig {
            window_frames: eval::window_frames(eval::POSTPROCESS_WINDOW_S, stft.hop_seconds(crate::SAMPLE_RATE)),
            percentile: eval::POSTPROCESS_PERCENTILE,
        }
    }
}

/// Frame-synchronous detector for one audio stream.
#[derive(Debug, Clone)]
pub struct StreamingDetector<'m> {
    model: &'m CrnModel<f32>,
    features: FeatureStream,
    state: StreamState<f32>,
    post: Option<(PostConfig, Vec<TrailingPercentile>)>,
    frame: usize,
    feat: Vec<f32>,
}

impl<'m> StreamingDetector<'m> {
    pub fn new(model: &'m CrnModel<f32>, stft: StftConfig, post: Option<PostConfig>) -> Result<Self, StreamError> {
        Ok(StreamingDetector {
            model,
            features: FeatureStream::new(stft)?,
            state: StreamState::new(model),
            post: post.map(|p| (p, (0..model.n_out()).map(|_| TrailingPercentile::new(p.window_frames, p.percentile)).collect())),
            frame: 0,
            feat: vec![0.0; N_FEATURES],
        })
    }

    /// Feeds samples and appends one output per completed frame.
    pub fn push(&mut self, samples: &[f32], out: &mut Vec<FrameOutput>) -> Result<(), StreamError> {
        let StreamingDetector { model, features, state, post, frame, feat } = self;
        let mut err = None;
        features.push(samples, |f| {
            if err.is_some() {
                return;
            }
            for (d, &s) in feat.iter_mut().zip(f) {
                *d = s as f32;
            }
            match crn_step(model, state, feat) {
                Ok(raw) => {
                    let post_vals = match post.as_mut() {
                        Some((_, filters)) => raw.iter().zip(filters.iter_mut()).map(|(&r, p)| p.push(r as f64)).collect(),
                        None => Vec::new(),
                    };
                    out.push(FrameOutput { frame: *frame, raw, post: post_vals });
                    *frame += 1;
                }
                Err(e) => err = Some(e),
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    pub fn frames_emitted(&self) -> usize {
        self.frame
    }

    pub fn reset(&mut self) {
        self.features.reset();
        self.state.reset();
        if let Some((_, filters)) = self.post.as_mut() {
            filters.iter_mut().for_each(|f| f.reset());
        }
        self.frame = 0;
    }
}

/// Whole-clip counterpart of [`StreamingDetector`]: batch features and a
/// single forward pass over all frames.
pub fn batch_detect(model: &CrnModel<f32>, clip: &AudioClip, stft: StftConfig, post: Option<PostConfig>) -> Result<Vec<FrameOutput>, StreamError> {
    let feats = dsp::clip_features(clip, stft)?.to_f32();
    let raw = crn_forward(&feats, model)?;
    let n_out = model.n_out();
    let t_len = raw.len() / n_out;
    let post_cols: Vec<Vec<f64>> = match post {
        Some(p) => (0..n_out)
            .map(|k| {
                let col: Vec<f64> = raw.iter().skip(k).step_by(n_out).map(|&v| v as f64).collect();
                eval::postprocess(&col, p.window_frames, p.percentile)
            })
            .collect(),
        None => Vec::new(),
    };
    Ok((0..t_len)
        .map(|t| FrameOutput {
            frame: t,
            raw: raw[t * n_out..(t + 1) * n_out].to_vec(),
            post: post_cols.iter().map(|c| c[t]).collect(),
        })
        .collect())
}

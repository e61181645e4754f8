//! Timed whole-clip inference, streaming or batch.

use std::time::{Duration, Instant};

use vadkit_core::dsp::StftConfig;
use vadkit_core::stream::{batch_detect, FrameOutput, PostConfig, StreamError, StreamingDetector};
use vadkit_core::{AudioClip, CrnModel};

use crate::formats::PredictionRow;

#[derive(Debug, Clone)]
pub struct InferOutput {
    pub frames: Vec<FrameOutput>,
    /// Features, network and post-processing; file IO excluded.
    pub elapsed: Duration,
    pub audio_s: f64,
}

impl InferOutput {
    /// Processing time per second of audio, in milliseconds.
    pub fn ms_per_audio_second(&self) -> f64 {
        self.elapsed.as_secs_f64() * 1e3 / self.audio_s
    }

    pub fn rows(&self, stft: &StftConfig) -> Vec<PredictionRow> {
        let hop_s = stft.hop_seconds(vadkit_core::SAMPLE_RATE);
        self.frames
            .iter()
            .map(|f| PredictionRow { frame: f.frame, time_s: f.frame as f64 * hop_s, raw: f.raw.clone(), post: f.post.clone() })
            .collect()
    }
}

/// Feeds the clip through a [`StreamingDetector`] in blocks of `block`
/// samples.
pub fn run_streaming(model: &CrnModel<f32>, clip: &AudioClip, stft: StftConfig, post: Option<PostConfig>, block: usize) -> Result<InferOutput, StreamError> {
    let start = Instant::now();
    let mut det = StreamingDetector::new(model, stft, post)?;
    let mut frames = Vec::with_capacity(stft.frame_count(clip.len()));
    for chunk in clip.samples().chunks(block.max(1)) {
        det.push(chunk, &mut frames)?;
    }
    Ok(InferOutput { frames, elapsed: start.elapsed(), audio_s: clip.duration_s() })
}

pub fn run_batch(model: &CrnModel<f32>, clip: &AudioClip, stft: StftConfig, post: Option<PostConfig>) -> Result<InferOutput, StreamError> {
    let start = Instant::now();
    let frames = batch_detect(model, clip, stft, post)?;
    Ok(InferOutput { frames, elapsed: start.elapsed(), audio_s: clip.duration_s() })
}

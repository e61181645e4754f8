//! In-memory audio clips.

use alloc::string::String;
use alloc::vec::Vec;

/// The only sample rate the toolkit accepts.
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudioError {
    #[error("audio clip is empty")]
    EmptyAudio,
    #[error("sample rate {0} Hz is not supported (expected {SAMPLE_RATE} Hz)")]
    SampleRateMismatch(u32),
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
}

/// Mono 16 kHz audio with an opaque source tag.
///
/// Samples are nominally in `[-1, 1]`; writers clamp, the type itself only
/// guarantees finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self, AudioError> {
        if sample_rate != SAMPLE_RATE {
            return Err(AudioError::SampleRateMismatch(sample_rate));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(AudioClip { samples, sample_rate, source_id: source_id.into() })
    }

    /// Builds a 16 kHz clip from `f64` samples.
    pub fn from_f64(samples: &[f64], source_id: impl Into<String>) -> Result<Self, AudioError> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), SAMPLE_RATE, source_id)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// Copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> AudioClip {
        AudioClip {
            samples: self.samples.iter().map(|&s| (s as f64 * gain) as f32).collect(),
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_other_rates() {
        assert_eq!(AudioClip::new(vec![0.0; 4], 48_000, "x"), Err(AudioError::SampleRateMismatch(48_000)));
    }

    #[test]
    fn rejects_nan() {
        assert_eq!(AudioClip::new(vec![0.0, f32::NAN], SAMPLE_RATE, "x"), Err(AudioError::NonFiniteSample(1)));
    }
}

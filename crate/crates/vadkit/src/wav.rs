//! Mono 16 kHz WAV files, 16-bit integer or 32-bit float.

use std::io;
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use vadkit_core::{AudioClip, AudioError, SAMPLE_RATE};

use crate::atomic;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("sample rate {0} Hz is not supported (expected 16000 Hz, no resampling is done)")]
    SampleRateMismatch(u32),
    #[error("audio is empty")]
    EmptyAudio,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<AudioError> for WavError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::EmptyAudio => WavError::EmptyAudio,
            AudioError::SampleRateMismatch(sr) => WavError::SampleRateMismatch(sr),
            AudioError::NonFiniteSample(i) => WavError::NonFiniteSample(i),
        }
    }
}

fn from_hound(e: hound::Error) -> WavError {
    match e {
        hound::Error::IoError(e) => WavError::Io(e),
        other => WavError::UnsupportedFormat(other.to_string()),
    }
}

/// Sample encoding used by [`write_wav_as`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    Float32,
}

/// Reads a mono 16 kHz file. 16-bit samples are divided by 32768.
pub fn read_wav(path: &Path) -> Result<AudioClip, WavError> {
    if !path.is_file() {
        return Err(WavError::FileNotFound(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(from_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(WavError::UnsupportedFormat(format!("{} channels, only mono is accepted", spec.channels)));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(from_hound)?,
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>().map_err(from_hound)?,
        (fmt, bits) => return Err(WavError::UnsupportedFormat(format!("{bits}-bit {fmt:?}"))),
    };
    if spec.sample_rate != SAMPLE_RATE {
        return Err(WavError::SampleRateMismatch(spec.sample_rate));
    }
    if samples.is_empty() {
        return Err(WavError::EmptyAudio);
    }
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(AudioClip::new(samples, SAMPLE_RATE, id)?)
}

/// Writes 16-bit PCM; samples are clamped to `[-1, 1]`.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<(), WavError> {
    write_wav_as(clip, path, WavFormat::Pcm16)
}

/// 16-bit quantization: `round(x * 32768)` clamped to the i16 range.
pub fn quantize(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav_as(clip: &AudioClip, path: &Path, format: WavFormat) -> Result<(), WavError> {
    if clip.is_empty() {
        return Err(WavError::EmptyAudio);
    }
    let spec = match format {
        WavFormat::Pcm16 => WavSpec { channels: 1, sample_rate: SAMPLE_RATE, bits_per_sample: 16, sample_format: SampleFormat::Int },
        WavFormat::Float32 => WavSpec { channels: 1, sample_rate: SAMPLE_RATE, bits_per_sample: 32, sample_format: SampleFormat::Float },
    };
    atomic::write_with(path, |file| {
        let mut w = WavWriter::new(io::BufWriter::new(file), spec).map_err(hound_io)?;
        for &s in clip.samples() {
            match format {
                WavFormat::Pcm16 => w.write_sample(quantize(s)),
                WavFormat::Float32 => w.write_sample(s.clamp(-1.0, 1.0)),
            }
            .map_err(hound_io)?;
        }
        w.finalize().map_err(hound_io)
    })?;
    Ok(())
}

fn hound_io(e: hound::Error) -> io::Error {
    match e {
        hound::Error::IoError(e) => e,
        other => io::Error::other(other.to_string()),
    }
}

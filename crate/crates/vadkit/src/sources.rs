//! Recorded speech and noise from WAV directories.

use std::io;
use std::path::{Path, PathBuf};

use vadkit_core::rng;
use vadkit_core::synth::{NoiseKind, SignalSource, SynthError, SyntheticSources};
use vadkit_core::AudioClip;

use crate::wav::read_wav;

/// Drop-in replacement for [`SyntheticSources`]. A missing directory falls
/// back to the synthetic generator for that signal type.
#[derive(Debug, Clone, Default)]
pub struct WavDirSources {
    speech: Vec<PathBuf>,
    noise: Vec<PathBuf>,
}

/// Sorted `*.wav` files of a directory.
pub fn list_wavs(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(io::Error::new(io::ErrorKind::NotFound, format!("no WAV files in {}", dir.display())));
    }
    Ok(files)
}

impl WavDirSources {
    pub fn new(speech_dir: Option<&Path>, noise_dir: Option<&Path>) -> io::Result<Self> {
        Ok(WavDirSources {
            speech: speech_dir.map(list_wavs).transpose()?.unwrap_or_default(),
            noise: noise_dir.map(list_wavs).transpose()?.unwrap_or_default(),
        })
    }

    pub fn is_synthetic(&self) -> bool {
        self.speech.is_empty() && self.noise.is_empty()
    }
}

/// A file picked by `seed`, looped or cropped at a seeded offset to `len`.
fn excerpt(files: &[PathBuf], seed: u64, len: usize) -> Result<AudioClip, SynthError> {
    let path = &files[(rng::derive(seed, 0) % files.len() as u64) as usize];
    let clip = read_wav(path).map_err(|e| SynthError::Source(format!("{}: {e}", path.display())))?;
    let src = clip.samples();
    let start = if src.len() > len { (rng::derive(seed, 1) % (src.len() - len + 1) as u64) as usize } else { 0 };
    let samples: Vec<f32> = (0..len).map(|i| src[(start + i) % src.len()]).collect();
    AudioClip::new(samples, clip.sample_rate(), clip.source_id()).map_err(|e| SynthError::Source(e.to_string()))
}

impl SignalSource for WavDirSources {
    fn speech(&self, seed: u64, len: usize) -> Result<AudioClip, SynthError> {
        if self.speech.is_empty() {
            SyntheticSources.speech(seed, len)
        } else {
            excerpt(&self.speech, seed, len)
        }
    }

    fn noise(&self, seed: u64, len: usize) -> Result<(AudioClip, Option<NoiseKind>), SynthError> {
        if self.noise.is_empty() {
            SyntheticSources.noise(seed, len)
        } else {
            Ok((excerpt(&self.noise, seed, len)?, None))
        }
    }
}

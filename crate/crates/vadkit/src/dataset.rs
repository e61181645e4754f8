//! Generated corpora on disk: WAVs, label CSVs and the manifest.

use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vadkit_core::dsp::{self, DspError, StftConfig};
use vadkit_core::labels::LabelError;
use vadkit_core::synth::{self, SignalSource, SynthConfig, SynthError};
use vadkit_core::train::Sequence;
use vadkit_core::SAMPLE_RATE;

use crate::formats::{self, FormatError, ManifestRow};
use crate::wav::{self, WavError};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("at least one example is required")]
    EmptyCount,
    #[error("{path}: {features} feature frames but {labels} label frames")]
    FrameMismatch { path: PathBuf, features: usize, labels: usize },
    #[error("manifest {0} lists no examples")]
    EmptyManifest(PathBuf),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A thread pool of exactly `jobs` workers.
pub fn pool(jobs: usize) -> io::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(io::Error::other)
}

fn file_names(index: usize) -> [String; 4] {
    [format!("mix_{index:05}.wav"), format!("labels_{index:05}.csv"), format!("target_{index:05}.wav"), format!("noise_{index:05}.wav")]
}

/// Generates `count` examples into `out_dir` and writes the manifest.
/// `components` additionally stores the target speech and scaled noise.
pub fn generate<S: SignalSource + Sync + ?Sized>(
    out_dir: &Path,
    count: usize,
    split_seed: u64,
    cfg: &SynthConfig,
    sources: &S,
    jobs: usize,
    components: bool,
) -> Result<Vec<ManifestRow>, DatasetError> {
    if count == 0 {
        return Err(DatasetError::EmptyCount);
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let rows = pool(jobs)?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| -> Result<ManifestRow, DatasetError> {
                let ex = synth::generate_example(i, split_seed, cfg, sources)?;
                let [mix, labels, target, noise] = file_names(i);
                wav::write_wav(&ex.mixture, &out_dir.join(&mix))?;
                formats::write_labels(&out_dir.join(&labels), &ex.labels)?;
                if components {
                    wav::write_wav_as(&ex.target, &out_dir.join(target), wav::WavFormat::Float32)?;
                    wav::write_wav_as(&ex.noise, &out_dir.join(noise), wav::WavFormat::Float32)?;
                }
                Ok(ManifestRow {
                    index: i,
                    seed: ex.spec.seed,
                    snr_db: ex.spec.snr_db,
                    level_dbfs: ex.spec.level_dbfs,
                    reverb: ex.spec.reverb,
                    rt60: if ex.spec.reverb { ex.spec.air_rt60_s } else { 0.0 },
                    mix_path: mix,
                    label_path: labels,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    formats::write_manifest(&out_dir.join(MANIFEST_FILE), &rows)?;
    Ok(rows)
}

/// Manifest path for a dataset directory or the manifest file itself.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

/// One manifest entry with its audio and labels loaded.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub row: ManifestRow,
    pub mixture: vadkit_core::AudioClip,
    pub sequence: Sequence,
}

/// Reads every example of a manifest and computes its features.
pub fn load(manifest: &Path, stft: StftConfig, jobs: usize) -> Result<Vec<LoadedClip>, DatasetError> {
    let manifest = manifest_path(manifest);
    let rows = formats::read_manifest(&manifest)?;
    if rows.is_empty() {
        return Err(DatasetError::EmptyManifest(manifest));
    }
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let hop_s = stft.hop_seconds(SAMPLE_RATE);
    pool(jobs)?.install(|| {
        rows.into_par_iter()
            .map(|row| {
                let mix_path = base.join(&row.mix_path);
                let mixture = wav::read_wav(&mix_path)?;
                let labels = formats::read_labels(&base.join(&row.label_path), hop_s)?;
                let feats = dsp::clip_features(&mixture, stft)?;
                if feats.n_frames() != labels.len() {
                    return Err(DatasetError::FrameMismatch { path: mix_path, features: feats.n_frames(), labels: labels.len() });
                }
                let sequence = Sequence { features: feats.to_f32(), vad: labels.vad, vnr_unit: labels.vnr_unit, snr_db: row.snr_db };
                Ok(LoadedClip { row, mixture, sequence })
            })
            .collect()
    })
}

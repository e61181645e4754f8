//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;
use std::str::FromStr;

use vadkit_core::dsp::{StftConfig, WindowKind};
use vadkit_core::labels::LabelConfig;
use vadkit_core::stream::PostConfig;
use vadkit_core::synth::SynthConfig;
use vadkit_core::train::{AdamWConfig, LossKind, TrainConfig};
use vadkit_core::{eval, SAMPLE_RATE};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid value `{value}` for `{key}`: {msg}")]
    InvalidValue { key: String, value: String, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Every key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed; every random stream is derived from it"),
    ("frame_len", "512", "STFT frame length in samples (32 ms)"),
    ("hop", "256", "STFT hop in samples (16 ms)"),
    ("vad_band_lo_hz", "150", "lower edge of the VAD energy band"),
    ("vad_band_hi_hz", "5000", "upper edge of the VAD energy band"),
    ("vad_rel_threshold", "0.01", "VAD threshold relative to the clip's maximum frame energy (-20 dB)"),
    ("vnr_bands", "32", "mel bands of the VNR weighting"),
    ("smooth_s", "0.2", "label smoothing window in seconds"),
    ("air_decay_db", "60", "decay of the AIR window"),
    ("air_decay_time_s", "0.3", "time over which the AIR window decays"),
    ("clip_s", "10", "generated clip length in seconds"),
    ("snr_mean_db", "5", "mean of the SNR distribution"),
    ("snr_std_db", "10", "standard deviation of the SNR distribution"),
    ("level_mean_dbfs", "-28", "mean of the level distribution"),
    ("level_std_dbfs", "10", "standard deviation of the level distribution"),
    ("reverb_prob", "0.8", "fraction of reverberant examples"),
    ("rt60_min_s", "0.2", "smallest synthetic RT60"),
    ("rt60_max_s", "0.8", "largest synthetic RT60"),
    ("speech_dir", "", "directory of mono 16 kHz speech WAVs; empty for pseudo-speech"),
    ("noise_dir", "", "directory of mono 16 kHz noise WAVs; empty for generated noise"),
    ("loss", "vnr_mae", "vad_bce, vnr_mae, multi_bce_mae or multi_bce_bce"),
    ("alpha", "0.2", "VNR weight of the multi-target BCE/MAE loss"),
    ("lr", "5e-5", "AdamW learning rate"),
    ("weight_decay", "0.01", "AdamW decoupled weight decay"),
    ("beta1", "0.9", "AdamW first-moment decay"),
    ("beta2", "0.999", "AdamW second-moment decay"),
    ("adam_eps", "1e-8", "AdamW epsilon"),
    ("batch_clips", "50", "sequences per optimizer step"),
    ("clip_len_s", "10", "training crop length in seconds"),
    ("clip_percentile", "10", "AutoClip percentile of past gradient norms"),
    ("patience", "10", "validations without improvement before stopping"),
    ("max_epochs", "100", "epoch limit"),
    ("post_window_s", "0.4", "post-processing window in seconds"),
    ("post_percentile", "90", "post-processing percentile"),
    ("snr_edges", "-10,-5,0,5,10,15,20", "SNR bin edges of the evaluation report"),
    ("jobs", "1", "worker threads for data generation and evaluation"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|&(k, v, _)| (k, v.to_owned())).collect() }
    }
}

impl RunConfig {
    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_owned() })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (k, _, _) = KEYS.iter().find(|(k, _, _)| *k == key).ok_or_else(|| ConfigError::UnknownKey(key.to_owned()))?;
        self.values.insert(k, value.to_owned());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: assignment.to_owned() })?;
        self.set(k.trim(), v.trim())
    }

    pub fn get_str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("`{key}` is not a configuration key"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get_str(key);
        v.parse().map_err(|e: T::Err| ConfigError::InvalidValue { key: key.into(), value: v.into(), msg: e.to_string() })
    }

    fn invalid(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue { key: key.into(), value: self.get_str(key).into(), msg: msg.into() }
    }

    /// Every key as a `key = value` line.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.get("seed")
    }

    pub fn jobs(&self) -> Result<usize, ConfigError> {
        match self.get("jobs")? {
            0 => Err(self.invalid("jobs", "must be at least 1")),
            n => Ok(n),
        }
    }

    pub fn stft(&self) -> Result<StftConfig, ConfigError> {
        let s = StftConfig { frame_len: self.get("frame_len")?, hop: self.get("hop")?, window: WindowKind::Hann };
        s.validate().map_err(|e| self.invalid("frame_len", e.to_string()))?;
        Ok(s)
    }

    pub fn labels(&self) -> Result<LabelConfig, ConfigError> {
        Ok(LabelConfig {
            stft: self.stft()?,
            vad_band_hz: (self.get("vad_band_lo_hz")?, self.get("vad_band_hi_hz")?),
            vad_rel_threshold: self.get("vad_rel_threshold")?,
            vnr_bands: self.get("vnr_bands")?,
            smooth_s: self.get("smooth_s")?,
            air_decay_db: self.get("air_decay_db")?,
            air_decay_time_s: self.get("air_decay_time_s")?,
        })
    }

    pub fn synth(&self) -> Result<SynthConfig, ConfigError> {
        let cfg = SynthConfig {
            clip_s: self.get("clip_s")?,
            snr_mean_db: self.get("snr_mean_db")?,
            snr_std_db: self.get("snr_std_db")?,
            level_mean_dbfs: self.get("level_mean_dbfs")?,
            level_std_dbfs: self.get("level_std_dbfs")?,
            reverb_prob: self.get("reverb_prob")?,
            rt60_range_s: (self.get("rt60_min_s")?, self.get("rt60_max_s")?),
            labels: self.labels()?,
        };
        cfg.validate().map_err(|e| self.invalid("clip_s", e.to_string()))?;
        Ok(cfg)
    }

    pub fn loss(&self) -> Result<LossKind, ConfigError> {
        LossKind::parse(self.get_str("loss")).ok_or_else(|| self.invalid("loss", "expected vad_bce, vnr_mae, multi_bce_mae or multi_bce_bce"))
    }

    pub fn train(&self) -> Result<TrainConfig, ConfigError> {
        let cfg = TrainConfig {
            loss_kind: self.loss()?,
            alpha: self.get("alpha")?,
            optimizer: AdamWConfig {
                lr: self.get("lr")?,
                weight_decay: self.get("weight_decay")?,
                beta1: self.get("beta1")?,
                beta2: self.get("beta2")?,
                eps: self.get("adam_eps")?,
            },
            batch_clips: self.get("batch_clips")?,
            clip_len_s: self.get("clip_len_s")?,
            clip_percentile: self.get("clip_percentile")?,
            patience: self.get("patience")?,
            max_epochs: self.get("max_epochs")?,
            seed: self.seed()?,
            stft: self.stft()?,
        };
        cfg.validate().map_err(|e| self.invalid("loss", e.to_string()))?;
        Ok(cfg)
    }

    pub fn post(&self) -> Result<PostConfig, ConfigError> {
        let window_s: f64 = self.get("post_window_s")?;
        let percentile: f64 = self.get("post_percentile")?;
        if !(window_s > 0.0) {
            return Err(self.invalid("post_window_s", "must be positive"));
        }
        if !(percentile > 0.0 && percentile <= 100.0) {
            return Err(self.invalid("post_percentile", "must lie in (0, 100]"));
        }
        let hop_s = self.stft()?.hop_seconds(SAMPLE_RATE);
        Ok(PostConfig { window_frames: eval::window_frames(window_s, hop_s), percentile })
    }

    pub fn snr_edges(&self) -> Result<Vec<f64>, ConfigError> {
        let edges = self
            .get_str("snr_edges")
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| self.invalid("snr_edges", e.to_string()))?;
        if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(self.invalid("snr_edges", "edges must be strictly increasing"));
        }
        Ok(edges)
    }

    /// Directory value, `None` when empty.
    pub fn dir(&self, key: &str) -> Option<&Path> {
        Some(self.get_str(key)).filter(|s| !s.is_empty()).map(Path::new)
    }
}

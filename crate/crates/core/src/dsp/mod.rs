//! Framing, frequency weightings and per-frame band energies.
//!
//! Conventions used throughout:
//! * periodic Hann analysis window, unnormalized one-sided DFT
//!   (`K = frame_len / 2 + 1` bins, no doubling of the non-DC bins);
//! * weighted energy of band `b` at frame `n` is `sum_k (w[b,k] |X[n,k]|)^2`.

pub mod fft;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use num_complex::Complex64;

use crate::audio::AudioClip;
use crate::math;

pub use fft::Fft;

/// Floor applied to mel energies before taking `log10`.
pub const LOG_FLOOR: f64 = 1e-10;
/// Number of log-mel network input features.
pub const N_FEATURES: usize = 64;
/// Bands of the mel weighting used for the voice-to-noise ratio.
pub const N_VNR_BANDS: usize = 32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DspError {
    #[error("signal of {len} samples is shorter than one frame ({frame_len})")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid frequency range [{lo}, {hi}] Hz")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// `0.5 - 0.5 cos(2 pi n / N)`
    #[default]
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len).map(|n| 0.5 - 0.5 * math::cos(2.0 * PI * n as f64 / len as f64)).collect(),
            WindowKind::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 32 ms frames with a 16 ms shift at 16 kHz.
    fn default() -> Self {
        StftConfig { frame_len: 512, hop: 256, window: WindowKind::Hann }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.frame_len == 0 || !self.frame_len.is_multiple_of(2) {
            return Err(DspError::InvalidConfig("frame_len must be even and positive"));
        }
        if !self.frame_len.is_power_of_two() {
            return Err(DspError::InvalidConfig("frame_len must be a power of two"));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(DspError::InvalidConfig("hop must be in 1..=frame_len"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// `floor((len - frame_len) / hop) + 1`, or 0 if `len < frame_len`.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    pub fn hop_seconds(&self, sample_rate: u32) -> f64 {
        self.hop as f64 / sample_rate as f64
    }
}

/// One-sided complex STFT, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    n_frames: usize,
    n_bins: usize,
    data: Vec<Complex64>,
    config: StftConfig,
}

impl Spectrogram {
    pub fn from_parts(n_frames: usize, n_bins: usize, data: Vec<Complex64>, config: StftConfig) -> Result<Self, DspError> {
        if data.len() != n_frames * n_bins {
            return Err(DspError::DimensionMismatch { expected: n_frames * n_bins, got: data.len() });
        }
        Ok(Spectrogram { n_frames, n_bins, data, config })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn frame(&self, n: usize) -> &[Complex64] {
        &self.data[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
}

/// Which construction produced a [`FreqWeighting`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightingKind {
    BandpassMask,
    Mel,
}

/// Non-negative `bands x bins` weighting matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqWeighting {
    n_bands: usize,
    n_bins: usize,
    matrix: Vec<f64>,
    kind: WeightingKind,
}

impl FreqWeighting {
    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn kind(&self) -> WeightingKind {
        self.kind
    }

    pub fn row(&self, b: usize) -> &[f64] {
        &self.matrix[b * self.n_bins..(b + 1) * self.n_bins]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }
}

/// Plain row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }
}

/// `frames x 64` log10 mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFeatures {
    n_frames: usize,
    n_bands: usize,
    data: Vec<f64>,
}

impl MelFeatures {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.data[n * self.n_bands..(n + 1) * self.n_bands]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row-major `f32` copy, the network's input layout.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Reusable analysis state: window plus FFT plan.
#[derive(Debug, Clone)]
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    fft: Fft,
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self, DspError> {
        config.validate()?;
        Ok(StftPlan { config, window: config.window.coefficients(config.frame_len), fft: Fft::new(config.frame_len) })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    /// Windowed one-sided spectrum of a single frame of `frame_len` samples.
    pub fn frame_spectrum(&self, frame: &[f64], scratch: &mut Vec<Complex64>, out: &mut [Complex64]) {
        let n = self.config.frame_len;
        debug_assert_eq!(frame.len(), n);
        scratch.clear();
        scratch.extend(frame.iter().zip(&self.window).map(|(&x, &w)| Complex64::new(x * w, 0.0)));
        self.fft.forward(scratch);
        out.copy_from_slice(&scratch[..self.config.n_bins()]);
    }

    pub fn analyze(&self, signal: &[f64]) -> Result<Spectrogram, DspError> {
        let cfg = self.config;
        if signal.len() < cfg.frame_len {
            return Err(DspError::TooShort { len: signal.len(), frame_len: cfg.frame_len });
        }
        let n_frames = cfg.frame_count(signal.len());
        let k = cfg.n_bins();
        let mut data = vec![Complex64::new(0.0, 0.0); n_frames * k];
        let mut scratch = Vec::with_capacity(cfg.frame_len);
        for n in 0..n_frames {
            let start = n * cfg.hop;
            self.frame_spectrum(&signal[start..start + cfg.frame_len], &mut scratch, &mut data[n * k..(n + 1) * k]);
        }
        Ok(Spectrogram { n_frames, n_bins: k, data, config: cfg })
    }
}

/// STFT of a clip. Frame `n` covers samples `[n*hop, n*hop + frame_len)`.
pub fn stft(clip: &AudioClip, config: StftConfig) -> Result<Spectrogram, DspError> {
    stft_f64(&clip.samples_f64(), config)
}

pub fn stft_f64(signal: &[f64], config: StftConfig) -> Result<Spectrogram, DspError> {
    StftPlan::new(config)?.analyze(signal)
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * math::log10(1.0 + f / 700.0)
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (math::powf(10.0, m / 2595.0) - 1.0)
}

/// Triangular mel filterbank with unit peaks on the DFT bin grid.
///
/// `n_mels + 2` edge frequencies are spaced evenly on the HTK mel scale
/// between `fmin` and `fmax` and rounded to the nearest bin; filter `b`
/// rises linearly from edge `b` to a peak of exactly 1 at edge `b + 1` and
/// falls back to zero at edge `b + 2`.
pub fn mel_filterbank(n_mels: usize, fmin: f64, fmax: f64, sr: f64, n_fft: usize) -> Result<FreqWeighting, DspError> {
    if !(fmin >= 0.0 && fmin < fmax && fmax <= sr / 2.0) || n_mels == 0 {
        return Err(DspError::InvalidRange { lo: fmin, hi: fmax });
    }
    let n_bins = n_fft / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<usize> = (0..n_mels + 2)
        .map(|i| {
            let hz = mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64);
            (math::round(hz * n_fft as f64 / sr) as usize).min(n_bins - 1)
        })
        .collect();
    let mut matrix = vec![0.0; n_mels * n_bins];
    for b in 0..n_mels {
        let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        let row = &mut matrix[b * n_bins..(b + 1) * n_bins];
        for (k, w) in row.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *w = if k < c {
                (k - lo) as f64 / (c - lo) as f64
            } else if k == c {
                1.0
            } else {
                (hi - k) as f64 / (hi - c) as f64
            };
        }
    }
    Ok(FreqWeighting { n_bands: n_mels, n_bins, matrix, kind: WeightingKind::Mel })
}

/// 0/1 mask over bins whose center frequency `k * sr / n_fft` lies in `[flo, fhi]`.
pub fn bandpass_weighting(flo: f64, fhi: f64, sr: f64, n_fft: usize) -> Result<FreqWeighting, DspError> {
    if !(flo >= 0.0 && flo < fhi && fhi <= sr / 2.0) {
        return Err(DspError::InvalidRange { lo: flo, hi: fhi });
    }
    let n_bins = n_fft / 2 + 1;
    let df = sr / n_fft as f64;
    let matrix = (0..n_bins)
        .map(|k| {
            let f = k as f64 * df;
            if f >= flo && f <= fhi {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(FreqWeighting { n_bands: 1, n_bins, matrix, kind: WeightingKind::BandpassMask })
}

/// Per-frame, per-band weighted energies `sum_k (w[b,k] |X[n,k]|)^2`.
pub fn band_energy(spec: &Spectrogram, w: &FreqWeighting) -> Result<Matrix, DspError> {
    if spec.n_bins != w.n_bins {
        return Err(DspError::DimensionMismatch { expected: w.n_bins, got: spec.n_bins });
    }
    let (t, b) = (spec.n_frames, w.n_bands);
    let mut data = vec![0.0; t * b];
    let mut mag2 = Vec::with_capacity(w.n_bins);
    for n in 0..t {
        spectrum_band_energy(spec.frame(n), w, &mut mag2, &mut data[n * b..(n + 1) * b]);
    }
    Ok(Matrix { rows: t, cols: b, data })
}

/// Band energies of a single one-sided spectrum. `out` has one slot per band.
pub fn spectrum_band_energy(frame: &[Complex64], w: &FreqWeighting, mag2: &mut Vec<f64>, out: &mut [f64]) {
    debug_assert_eq!(frame.len(), w.n_bins);
    mag2.clear();
    mag2.extend(frame.iter().map(|x| x.norm_sqr()));
    for (band, o) in out.iter_mut().enumerate().take(w.n_bands) {
        *o = w.row(band).iter().zip(mag2.iter()).map(|(&wk, &m)| wk * wk * m).sum();
    }
}

/// `||W x(n)||^2` per frame, the row sums of [`band_energy`].
pub fn frame_energy(spec: &Spectrogram, w: &FreqWeighting) -> Result<Vec<f64>, DspError> {
    Ok(band_energy(spec, w)?.row_sums())
}

/// `log10(max(band_energy, 1e-10))` for a 64-band mel weighting.
pub fn log_mel_features(spec: &Spectrogram, fb: &FreqWeighting) -> Result<MelFeatures, DspError> {
    if fb.n_bands != N_FEATURES {
        return Err(DspError::DimensionMismatch { expected: N_FEATURES, got: fb.n_bands });
    }
    let e = band_energy(spec, fb)?;
    Ok(MelFeatures { n_frames: e.rows, n_bands: e.cols, data: e.data.iter().map(|&v| math::log10(v.max(LOG_FLOOR))).collect() })
}

/// The 64-band 0-8 kHz network input filterbank for a given frame length.
pub fn feature_filterbank(n_fft: usize) -> FreqWeighting {
    mel_filterbank(N_FEATURES, 0.0, 8000.0, crate::SAMPLE_RATE as f64, n_fft).expect("static range is valid")
}

/// Log-mel network features of a clip with the given framing.
pub fn clip_features(clip: &AudioClip, config: StftConfig) -> Result<MelFeatures, DspError> {
    let spec = stft(clip, config)?;
    log_mel_features(&spec, &feature_filterbank(config.frame_len))
}

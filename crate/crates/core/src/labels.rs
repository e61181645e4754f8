//! Frame-level training targets.
//!
//! Two targets are derived from the target speech `x = h_win * s` (dry
//! speech convolved with an exponentially windowed room response) and the
//! noise `v`:
//!
//! * a clean-level VAD: frame `n` is active iff its band-passed energy
//!   exceeds a fraction of the clip's maximum frame energy;
//! * a segmental voice-to-noise ratio: mel-weighted speech over noise
//!   energy in dB, limited to `[-15, 40]` and mapped affinely onto `[0, 1]`.
//!
//! Both tracks are then smoothed with a centered moving average.

use alloc::vec;
use alloc::vec::Vec;

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::dsp::{self, DspError, FreqWeighting, Spectrogram, StftConfig};
use crate::math;

pub const VNR_MIN_DB: f64 = -15.0;
pub const VNR_MAX_DB: f64 = 40.0;
/// Floor on the numerator and denominator of the VNR ratio.
pub const VNR_ENERGY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LabelError {
    #[error("room response is all zeros")]
    AllZeroAir,
    #[error("direct path index {index} outside response of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("spectrogram has no frames")]
    EmptySpectrogram,
    #[error("frame counts differ: speech {speech}, noise {noise}")]
    FrameCountMismatch { speech: usize, noise: usize },
    #[error("VNR value {0} dB outside [-15, 40]")]
    OutOfRange(f64),
    #[error("speech and noise lengths differ: {speech} vs {noise}")]
    LengthMismatch { speech: usize, noise: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Exponential window applied to a room response after its direct path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirWindowSpec {
    pub decay_db: f64,
    pub decay_time_s: f64,
    pub direct_path_index: usize,
}

impl AirWindowSpec {
    /// 60 dB over 0.3 s, anchored at `direct_path_index`.
    pub fn standard(direct_path_index: usize) -> Self {
        AirWindowSpec { decay_db: 60.0, decay_time_s: 0.3, direct_path_index }
    }

    /// Gain applied `delta` samples after the direct path.
    pub fn gain_after(&self, delta: usize) -> f64 {
        math::powf(10.0, -(self.decay_db / 20.0) * delta as f64 / (self.decay_time_s * SAMPLE_RATE as f64))
    }
}

/// Per-frame targets for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub vad: Vec<f64>,
    pub vnr_db: Vec<f64>,
    pub vnr_unit: Vec<f64>,
    pub frame_hop_s: f64,
}

impl LabelTrack {
    pub fn len(&self) -> usize {
        self.vad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vad.is_empty()
    }

    /// Binary ground truth from the smoothed VAD track (`vad > 0.5`).
    pub fn vad_truth(&self) -> Vec<bool> {
        self.vad.iter().map(|&v| v > 0.5).collect()
    }

    /// Binary ground truth from the smoothed VNR track (`vnr_db > tau`).
    pub fn vnr_truth(&self, tau_db: f64) -> Vec<bool> {
        self.vnr_db.iter().map(|&v| v > tau_db).collect()
    }
}

/// Everything needed to turn signals into a [`LabelTrack`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelConfig {
    pub stft: StftConfig,
    pub vad_band_hz: (f64, f64),
    pub vad_rel_threshold: f64,
    pub vnr_bands: usize,
    pub smooth_s: f64,
    pub air_decay_db: f64,
    pub air_decay_time_s: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            stft: StftConfig::default(),
            vad_band_hz: (150.0, 5000.0),
            vad_rel_threshold: 0.01,
            vnr_bands: dsp::N_VNR_BANDS,
            smooth_s: 0.2,
            air_decay_db: 60.0,
            air_decay_time_s: 0.3,
        }
    }
}

impl LabelConfig {
    pub fn vad_weighting(&self) -> Result<FreqWeighting, DspError> {
        dsp::bandpass_weighting(self.vad_band_hz.0, self.vad_band_hz.1, SAMPLE_RATE as f64, self.stft.frame_len)
    }

    pub fn vnr_weighting(&self) -> Result<FreqWeighting, DspError> {
        dsp::mel_filterbank(self.vnr_bands, 0.0, SAMPLE_RATE as f64 / 2.0, SAMPLE_RATE as f64, self.stft.frame_len)
    }

    pub fn hop_s(&self) -> f64 {
        self.stft.hop_seconds(SAMPLE_RATE)
    }
}

/// Index of the largest absolute sample.
pub fn find_direct_path(air: &AudioClip) -> Result<usize, LabelError> {
    let mut best = (0usize, 0.0f32);
    for (i, &s) in air.samples().iter().enumerate() {
        if s.abs() > best.1 {
            best = (i, s.abs());
        }
    }
    if best.1 == 0.0 {
        return Err(LabelError::AllZeroAir);
    }
    Ok(best.0)
}

/// `h_win(t) = h(t) g(t)`: unity up to the direct path, then an exponential
/// decay of `decay_db` per `decay_time_s`.
pub fn window_air(air: &AudioClip, spec: &AirWindowSpec) -> Result<AudioClip, LabelError> {
    let d = spec.direct_path_index;
    if d >= air.len() {
        return Err(LabelError::IndexOutOfRange { index: d, len: air.len() });
    }
    let samples = air
        .samples()
        .iter()
        .enumerate()
        .map(|(t, &h)| if t <= d { h } else { (h as f64 * spec.gain_after(t - d)) as f32 })
        .collect();
    Ok(AudioClip::new(samples, air.sample_rate(), air.source_id()).expect("windowing keeps samples finite"))
}

/// Target speech `h_win * s`, truncated to the speech length.
pub fn target_speech(speech: &[f64], air: Option<&AudioClip>, cfg: &LabelConfig) -> Result<Vec<f64>, LabelError> {
    match air {
        None => Ok(speech.to_vec()),
        Some(air) => {
            let d = find_direct_path(air)?;
            let spec = AirWindowSpec { decay_db: cfg.air_decay_db, decay_time_s: cfg.air_decay_time_s, direct_path_index: d };
            let h = window_air(air, &spec)?.samples_f64();
            Ok(dsp::fft::convolve_same_start(speech, &h))
        }
    }
}

/// Binary VAD from precomputed frame energies `E(n) = ||W x(n)||^2`.
///
/// Active iff `E(n) > rel_threshold * max_n E(n)`; equality is inactive.
pub fn vad_from_energies(energies: &[f64], rel_threshold: f64) -> Vec<u8> {
    let max = energies.iter().cloned().fold(0.0, f64::max);
    let threshold = rel_threshold * max;
    energies.iter().map(|&e| u8::from(e > threshold)).collect()
}

pub fn compute_vad(target_spec: &Spectrogram, w_vad: &FreqWeighting, rel_threshold: f64) -> Result<Vec<u8>, LabelError> {
    if target_spec.n_frames() == 0 {
        return Err(LabelError::EmptySpectrogram);
    }
    let energies = dsp::frame_energy(target_spec, w_vad)?;
    Ok(vad_from_energies(&energies, rel_threshold))
}

/// VNR in dB from per-frame weighted energies, floored and clipped.
pub fn vnr_from_energies(speech: &[f64], noise: &[f64]) -> Result<Vec<f64>, LabelError> {
    if speech.len() != noise.len() {
        return Err(LabelError::FrameCountMismatch { speech: speech.len(), noise: noise.len() });
    }
    Ok(speech
        .iter()
        .zip(noise)
        .map(|(&s, &v)| {
            let db = 10.0 * math::log10(s.max(VNR_ENERGY_FLOOR) / v.max(VNR_ENERGY_FLOOR));
            db.clamp(VNR_MIN_DB, VNR_MAX_DB)
        })
        .collect())
}

pub fn compute_vnr(target_spec: &Spectrogram, noise_spec: &Spectrogram, w_vnr: &FreqWeighting) -> Result<Vec<f64>, LabelError> {
    if target_spec.n_frames() != noise_spec.n_frames() {
        return Err(LabelError::FrameCountMismatch { speech: target_spec.n_frames(), noise: noise_spec.n_frames() });
    }
    let s = dsp::frame_energy(target_spec, w_vnr)?;
    let v = dsp::frame_energy(noise_spec, w_vnr)?;
    vnr_from_energies(&s, &v)
}

/// `(v + 15) / 55`.
pub fn map_vnr_unit(vnr_db: &[f64]) -> Result<Vec<f64>, LabelError> {
    vnr_db
        .iter()
        .map(|&v| {
            if (VNR_MIN_DB..=VNR_MAX_DB).contains(&v) {
                Ok(vnr_db_to_unit(v))
            } else {
                Err(LabelError::OutOfRange(v))
            }
        })
        .collect()
}

#[inline]
pub fn vnr_db_to_unit(v: f64) -> f64 {
    (v - VNR_MIN_DB) / (VNR_MAX_DB - VNR_MIN_DB)
}

#[inline]
pub fn vnr_unit_to_db(u: f64) -> f64 {
    u * (VNR_MAX_DB - VNR_MIN_DB) + VNR_MIN_DB
}

/// Odd frame count closest to `window_s / hop_s` (at least 1).
pub fn smoothing_frames(window_s: f64, hop_s: f64) -> usize {
    let ratio = window_s / hop_s;
    let half = math::round((ratio - 1.0) / 2.0).max(0.0);
    2 * half as usize + 1
}

/// Centered moving average; near the edges the window shrinks to the
/// frames that exist.
pub fn smooth_track(seq: &[f64], window_s: f64, hop_s: f64) -> Vec<f64> {
    let half = smoothing_frames(window_s, hop_s) / 2;
    let n = seq.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + seq[i];
    }
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            // direct sum keeps constant inputs exact
            let sum: f64 = if hi - lo <= 64 { seq[lo..hi].iter().sum() } else { prefix[hi] - prefix[lo] };
            let v = sum / (hi - lo) as f64;
            let (mn, mx) = seq[lo..hi].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            v.clamp(mn, mx)
        })
        .collect()
}

/// Labels from an already assembled target speech `x` and noise `v`.
pub fn labels_from_target(x: &[f64], noise: &[f64], cfg: &LabelConfig) -> Result<LabelTrack, LabelError> {
    if x.len() != noise.len() {
        return Err(LabelError::LengthMismatch { speech: x.len(), noise: noise.len() });
    }
    let plan = dsp::StftPlan::new(cfg.stft)?;
    let xs = plan.analyze(x)?;
    let vs = plan.analyze(noise)?;
    let vad_raw = compute_vad(&xs, &cfg.vad_weighting()?, cfg.vad_rel_threshold)?;
    let vnr_raw = compute_vnr(&xs, &vs, &cfg.vnr_weighting()?)?;
    Ok(finish_labels(&vad_raw, &vnr_raw, cfg))
}

/// Smoothing, clipping and mapping shared by every label path.
pub fn finish_labels(vad_raw: &[u8], vnr_raw_db: &[f64], cfg: &LabelConfig) -> LabelTrack {
    let hop_s = cfg.hop_s();
    let vad_bin: Vec<f64> = vad_raw.iter().map(|&v| v as f64).collect();
    let vad = smooth_track(&vad_bin, cfg.smooth_s, hop_s);
    let vnr_db: Vec<f64> = smooth_track(vnr_raw_db, cfg.smooth_s, hop_s)
        .into_iter()
        .map(|v| v.clamp(VNR_MIN_DB, VNR_MAX_DB))
        .collect();
    let vnr_unit = vnr_db.iter().map(|&v| vnr_db_to_unit(v)).collect();
    LabelTrack { vad, vnr_db, vnr_unit, frame_hop_s: hop_s }
}

/// Full label pipeline from dry speech, optional room response and the
/// (already scaled) noise.
pub fn make_labels(speech: &AudioClip, air: Option<&AudioClip>, noise: &AudioClip, cfg: &LabelConfig) -> Result<LabelTrack, LabelError> {
    if speech.len() != noise.len() {
        return Err(LabelError::LengthMismatch { speech: speech.len(), noise: noise.len() });
    }
    let x = target_speech(&speech.samples_f64(), air, cfg)?;
    labels_from_target(&x, &noise.samples_f64(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft_f64;
    use num_complex::Complex64;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::from_f64(&samples, "t").unwrap()
    }

    /// Single-bin spectrogram whose masked frame energy is exactly `e`.
    fn energy_spec(energies: &[f64]) -> Spectrogram {
        let k = 257;
        let mut data = vec![Complex64::new(0.0, 0.0); energies.len() * k];
        for (n, &e) in energies.iter().enumerate() {
            data[n * k + 10] = Complex64::new(e.sqrt(), 0.0);
        }
        Spectrogram::from_parts(energies.len(), k, data, StftConfig::default()).unwrap()
    }

    #[test]
    fn direct_path_of_impulse() {
        let mut h = vec![0.0; 300];
        h[100] = 1.0;
        assert_eq!(find_direct_path(&clip(h)), Ok(100));
        assert_eq!(find_direct_path(&clip(vec![0.0; 10])), Err(LabelError::AllZeroAir));
    }

    #[test]
    fn planted_peak_in_decaying_air() {
        let mut h: Vec<f64> = (0..2000).map(|t| 0.5 * (-(t as f64) / 300.0).exp() * ((t * 7919 % 13) as f64 / 13.0 - 0.5)).collect();
        h[37] = -0.95;
        assert_eq!(find_direct_path(&clip(h)), Ok(37));
    }

    #[test]
    fn window_attenuates_60db_after_300ms() {
        let h = clip(vec![1.0; 6000]);
        let w = window_air(&h, &AirWindowSpec::standard(100)).unwrap();
        assert!(w.samples()[..=100].iter().all(|&s| s == 1.0));
        assert!((w.samples()[100 + 4800] as f64 - 1e-3).abs() < 1e-9);
        assert!(matches!(window_air(&h, &AirWindowSpec::standard(6000)), Err(LabelError::IndexOutOfRange { .. })));
    }

    #[test]
    fn vad_threshold_boundary() {
        let w = dsp::bandpass_weighting(0.0, 8000.0, 16000.0, 512).unwrap();
        assert_eq!(compute_vad(&energy_spec(&[1.0, 0.005]), &w, 0.01).unwrap(), vec![1, 0]);
        // exactly at the threshold stays inactive
        assert_eq!(vad_from_energies(&[4.0, 0.04, 0.0400001], 0.01), vec![1, 0, 1]);
        assert_eq!(compute_vad(&energy_spec(&[0.0, 0.0, 0.0]), &w, 0.01).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn vnr_examples() {
        assert_eq!(vnr_from_energies(&[2.0, 20.0, 0.0], &[2.0, 2.0, 1.0]).unwrap(), vec![0.0, 10.0, -15.0]);
        assert_eq!(vnr_from_energies(&[1e6], &[0.0]).unwrap(), vec![40.0]);
        assert!(matches!(vnr_from_energies(&[1.0], &[1.0, 2.0]), Err(LabelError::FrameCountMismatch { .. })));
    }

    #[test]
    fn unit_map_endpoints() {
        assert_eq!(map_vnr_unit(&[-15.0, 40.0, 12.5]).unwrap(), vec![0.0, 1.0, 0.5]);
        assert_eq!(map_vnr_unit(&[41.0]), Err(LabelError::OutOfRange(41.0)));
    }

    #[test]
    fn smoothing_window_size() {
        assert_eq!(smoothing_frames(0.2, 0.016), 13);
        assert_eq!(smoothing_frames(0.016, 0.016), 1);
    }

    #[test]
    fn smoothing_spike_and_constant() {
        let mut x = vec![0.0; 41];
        x[20] = 1.0;
        let y = smooth_track(&x, 0.2, 0.016);
        for (t, &v) in y.iter().enumerate() {
            let want = if (14..=26).contains(&t) { 1.0 / 13.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-15, "t={t}");
        }
        assert_eq!(smooth_track(&[0.7; 20], 0.2, 0.016), vec![0.7; 20]);
    }

    #[test]
    fn noise_only_labels() {
        let noise: Vec<f64> = (0..4096).map(|t| ((t * 7919 % 101) as f64 / 101.0 - 0.5) * 0.1).collect();
        let labels = make_labels(&clip(vec![0.0; 4096]), None, &clip(noise), &LabelConfig::default()).unwrap();
        assert!(labels.vad.iter().all(|&v| v == 0.0));
        assert!(labels.vnr_db.iter().all(|&v| v == -15.0));
        assert!(labels.vnr_unit.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_air_matches_direct_labels() {
        let speech: Vec<f64> = (0..8192).map(|t| if (2000..5000).contains(&t) { (t as f64 * 0.2).sin() * 0.5 } else { 0.0 }).collect();
        let noise: Vec<f64> = (0..8192).map(|t| ((t * 7919 % 113) as f64 / 113.0 - 0.5) * 0.05).collect();
        let mut delta = vec![0.0; 200];
        delta[0] = 1.0;
        let cfg = LabelConfig::default();
        let with_air = make_labels(&clip(speech.clone()), Some(&clip(delta)), &clip(noise.clone()), &cfg).unwrap();
        let s: Vec<f64> = clip(speech).samples_f64();
        let v: Vec<f64> = clip(noise).samples_f64();
        let xs = stft_f64(&s, cfg.stft).unwrap();
        let vs = stft_f64(&v, cfg.stft).unwrap();
        let vad = compute_vad(&xs, &cfg.vad_weighting().unwrap(), 0.01).unwrap();
        let vnr = compute_vnr(&xs, &vs, &cfg.vnr_weighting().unwrap()).unwrap();
        assert_eq!(with_air, finish_labels(&vad, &vnr, &cfg));
    }
}

//! Desk-scale corpus generation: pseudo-speech, noise, room responses,
//! reverberation, SNR mixing and level augmentation.
//!
//! Every example is a pure function of `(split_seed, index)`; see
//! [`crate::rng`] for how sub-streams are derived.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::dsp::{self, fft, StftConfig};
use crate::labels::{self, LabelConfig, LabelError, LabelTrack};
use crate::math;
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("RT60 of {0} s outside [0.1, 1.0]")]
    InvalidRt60(f64),
    #[error("speech has no active frames")]
    NoActiveSpeech,
    #[error("noise is all zeros")]
    SilentNoise,
    #[error("clip is all zeros")]
    SilentClip,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("source error: {0}")]
    Source(alloc::string::String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

impl From<dsp::DspError> for SynthError {
    fn from(e: dsp::DspError) -> Self {
        SynthError::Label(LabelError::Dsp(e))
    }
}

/// Stationary and non-stationary noise families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
    /// Pink noise with a slowly fluctuating level.
    Fluctuating,
    /// Mains hum harmonics over a pink floor.
    Hum,
    /// Impulsive clicks (keyboard-like) over a pink floor.
    Clicks,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 6] =
        [NoiseKind::White, NoiseKind::Pink, NoiseKind::Brown, NoiseKind::Fluctuating, NoiseKind::Hum, NoiseKind::Clicks];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Brown => "brown",
            NoiseKind::Fluctuating => "fluctuating",
            NoiseKind::Hum => "hum",
            NoiseKind::Clicks => "clicks",
        }
    }
}

/// Random draw describing one training mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    pub snr_db: f64,
    pub level_dbfs: f64,
    pub reverb: bool,
    pub air_rt60_s: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub clip_s: f64,
    pub snr_mean_db: f64,
    pub snr_std_db: f64,
    pub level_mean_dbfs: f64,
    pub level_std_dbfs: f64,
    pub reverb_prob: f64,
    pub rt60_range_s: (f64, f64),
    pub labels: LabelConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clip_s: 10.0,
            snr_mean_db: 5.0,
            snr_std_db: 10.0,
            level_mean_dbfs: -28.0,
            level_std_dbfs: 10.0,
            reverb_prob: 0.8,
            rt60_range_s: (0.2, 0.8),
            labels: LabelConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn clip_samples(&self) -> usize {
        math::round(self.clip_s * SAMPLE_RATE as f64) as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.clip_s > 0.0) || self.clip_samples() < self.labels.stft.frame_len {
            return Err(SynthError::InvalidConfig("clip length shorter than one frame"));
        }
        if !(self.snr_std_db >= 0.0 && self.level_std_dbfs >= 0.0) {
            return Err(SynthError::InvalidConfig("standard deviations must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.reverb_prob) {
            return Err(SynthError::InvalidConfig("reverb probability outside [0, 1]"));
        }
        let (lo, hi) = self.rt60_range_s;
        if !(0.1 <= lo && lo <= hi && hi <= 1.0) {
            return Err(SynthError::InvalidConfig("RT60 range must lie inside [0.1, 1.0]"));
        }
        Ok(())
    }
}

/// Supplier of dry speech and noise material.
///
/// The synthetic implementation is [`SyntheticSources`]; directories of
/// recorded WAV files plug in through the same trait.
pub trait SignalSource {
    fn speech(&self, seed: u64, len: usize) -> Result<AudioClip, SynthError>;
    fn noise(&self, seed: u64, len: usize) -> Result<(AudioClip, Option<NoiseKind>), SynthError>;
}

/// Pseudo-speech and generated noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticSources;

impl SignalSource for SyntheticSources {
    fn speech(&self, seed: u64, len: usize) -> Result<AudioClip, SynthError> {
        gen_pseudo_speech_samples(len, seed)
    }

    fn noise(&self, seed: u64, len: usize) -> Result<(AudioClip, Option<NoiseKind>), SynthError> {
        let kind = NoiseKind::ALL[rng::rng_for(rng::derive(seed, 0)).random_range(0..NoiseKind::ALL.len())];
        Ok((gen_noise_samples(kind, len, rng::derive(seed, 1)), Some(kind)))
    }
}

fn normal(rng: &mut rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Direct path impulse at a small random offset followed by an
/// exponentially decaying Gaussian tail (60 dB over `rt60_s`), peak 1.
pub fn gen_air(rt60_s: f64, length_s: f64, seed: u64) -> Result<AudioClip, SynthError> {
    if !(0.1..=1.0).contains(&rt60_s) {
        return Err(SynthError::InvalidRt60(rt60_s));
    }
    let sr = SAMPLE_RATE as f64;
    let len = (math::round(length_s * sr) as usize).max(2);
    let mut rng = rng::rng_for(seed);
    let offset = rng.random_range(0..=(80.min(len - 1)));
    let mut h = vec![0.0f64; len];
    h[offset] = 1.0;
    let tail_gain = rng.random_range(0.15..0.35);
    for (t, v) in h.iter_mut().enumerate().skip(offset + 1) {
        let env = math::powf(10.0, -3.0 * (t - offset) as f64 / (rt60_s * sr));
        *v = tail_gain * normal(&mut rng).clamp(-2.8, 2.8) * env;
    }
    let peak = h.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    for v in h.iter_mut() {
        *v /= peak;
    }
    Ok(AudioClip::from_f64(&h, format!("air:rt60={rt60_s:.3}")).expect("finite"))
}

/// Fraction of frames marked active by the clean-level VAD.
pub fn active_fraction(signal: &[f64], cfg: &LabelConfig) -> Result<f64, SynthError> {
    let active = active_frames(signal, cfg)?;
    Ok(active.iter().filter(|&&a| a == 1).count() as f64 / active.len() as f64)
}

/// Unsmoothed clean-level VAD of `signal`.
pub fn active_frames(signal: &[f64], cfg: &LabelConfig) -> Result<Vec<u8>, SynthError> {
    let spec = dsp::stft_f64(signal, cfg.stft)?;
    Ok(labels::compute_vad(&spec, &cfg.vad_weighting()?, cfg.vad_rel_threshold)?)
}

/// Voiced harmonic segments separated by pauses, `duration_s` long.
pub fn gen_pseudo_speech(duration_s: f64, seed: u64) -> Result<AudioClip, SynthError> {
    gen_pseudo_speech_samples(math::round(duration_s * SAMPLE_RATE as f64) as usize, seed)
}

const MIN_ACTIVE: f64 = 0.3;
const MAX_ACTIVE: f64 = 0.8;

fn gen_pseudo_speech_samples(len: usize, seed: u64) -> Result<AudioClip, SynthError> {
    let cfg = LabelConfig::default();
    let mut last = None;
    for attempt in 0..64u64 {
        let x = pseudo_speech_attempt(len, rng::derive(seed, attempt));
        let clip = AudioClip::from_f64(&x, format!("pseudo-speech:{seed:016x}")).expect("finite");
        if len < cfg.stft.frame_len {
            return Ok(clip);
        }
        let frac = active_fraction(&clip.samples_f64(), &cfg)?;
        if (MIN_ACTIVE..=MAX_ACTIVE).contains(&frac) {
            return Ok(clip);
        }
        last = Some(clip);
    }
    // Only reachable for very short clips where the fraction is coarse.
    Ok(last.expect("at least one attempt"))
}

fn pseudo_speech_attempt(len: usize, seed: u64) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut rng = rng::rng_for(seed);
    let mut out = vec![0.0; len];
    let mut t = if rng.random_bool(0.5) { (rng.random_range(0.1..0.8) * sr) as usize } else { 0 };
    while t < len {
        let seg_len = (rng.random_range(0.3..1.8) * sr) as usize;
        let end = (t + seg_len).min(len);
        voiced_segment(&mut out[t..end], &mut rng);
        t = end + (rng.random_range(0.2..1.5) * sr) as usize;
    }
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        for v in out.iter_mut() {
            *v *= 0.9 / peak;
        }
    }
    out
}

/// One harmonic complex with a gliding F0, a random formant emphasis and
/// syllable-rate amplitude modulation.
fn voiced_segment(out: &mut [f64], rng: &mut rng::Rng) {
    let sr = SAMPLE_RATE as f64;
    let f0 = rng.random_range(80.0..300.0);
    let n_harm: usize = rng.random_range(3..=10);
    let am_rate = rng.random_range(2.0..8.0);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let glide_rate = rng.random_range(0.3..1.5);
    let glide_depth = rng.random_range(0.02..0.12);
    let glide_phase = rng.random_range(0.0..2.0 * PI);
    let formant = rng.random_range(300.0..1200.0);
    let gain = rng.random_range(0.35..1.0);
    let amps: Vec<f64> = (1..=n_harm)
        .map(|k| {
            let f = k as f64 * f0;
            let emph = 1.0 + 2.0 * math::exp(-((f - formant) / 250.0) * ((f - formant) / 250.0));
            emph / k as f64
        })
        .collect();
    let mut phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let n = out.len();
    let ramp = (0.02 * sr) as usize;
    for (i, o) in out.iter_mut().enumerate() {
        let tau = i as f64 / sr;
        let f_inst = f0 * (1.0 + glide_depth * math::sin(2.0 * PI * glide_rate * tau + glide_phase));
        let am = 0.6 + 0.4 * math::sin(2.0 * PI * am_rate * tau + am_phase);
        let edge = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
        let mut v = 0.0;
        for (k, (a, ph)) in amps.iter().zip(phases.iter_mut()).enumerate() {
            let fk = f_inst * (k + 1) as f64;
            *ph += 2.0 * PI * fk / sr;
            if *ph > 2.0 * PI {
                *ph -= 2.0 * PI;
            }
            if fk < 0.45 * sr {
                v += a * math::sin(*ph);
            }
        }
        *o = gain * am * edge * v;
    }
}

/// Noise of the given family with unit RMS.
pub fn gen_noise(kind: NoiseKind, duration_s: f64, seed: u64) -> AudioClip {
    gen_noise_samples(kind, math::round(duration_s * SAMPLE_RATE as f64) as usize, seed)
}

fn gen_noise_samples(kind: NoiseKind, len: usize, seed: u64) -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let mut rng = rng::rng_for(seed);
    let white: Vec<f64> = (0..len).map(|_| normal(&mut rng)).collect();
    let mut x = match kind {
        NoiseKind::White => white,
        NoiseKind::Pink => pink(&white),
        NoiseKind::Brown => brown(&white),
        NoiseKind::Fluctuating => {
            let p = pink(&white);
            let rate = rng.random_range(0.2..2.0);
            let depth = rng.random_range(0.3..0.9);
            let ph = rng.random_range(0.0..2.0 * PI);
            p.iter()
                .enumerate()
                .map(|(i, &v)| v * (1.0 - depth * 0.5 * (1.0 + math::sin(2.0 * PI * rate * i as f64 / sr + ph))))
                .collect()
        }
        NoiseKind::Hum => {
            let p = pink(&white);
            let mains = if rng.random_bool(0.5) { 50.0 } else { 60.0 };
            let floor = rng.random_range(0.05..0.3);
            p.iter()
                .enumerate()
                .map(|(i, &v)| {
                    let tau = i as f64 / sr;
                    let hum: f64 = (1..=6).map(|k| math::sin(2.0 * PI * mains * k as f64 * tau) / k as f64).sum();
                    hum + floor * v
                })
                .collect()
        }
        NoiseKind::Clicks => {
            let mut p: Vec<f64> = pink(&white).iter().map(|v| 0.1 * v).collect();
            let rate = rng.random_range(2.0..10.0);
            let n_clicks = (rate * len as f64 / sr) as usize;
            for _ in 0..n_clicks {
                let at = rng.random_range(0..len.max(1));
                let amp = rng.random_range(1.0..4.0);
                let decay = rng.random_range(0.001..0.006) * sr;
                for j in 0..((decay * 6.0) as usize).min(len - at) {
                    p[at + j] += amp * normal(&mut rng) * math::exp(-(j as f64) / decay);
                }
            }
            p
        }
    };
    let rms = math::sqrt(x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64);
    if rms > 0.0 {
        for v in x.iter_mut() {
            *v /= rms;
        }
    }
    AudioClip::new(x.iter().map(|&v| v as f32).collect(), SAMPLE_RATE, format!("noise:{}", kind.name())).expect("finite")
}

/// Paul Kellet's economy pink filter.
fn pink(white: &[f64]) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    white
        .iter()
        .map(|&w| {
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

/// Leaky integrator.
fn brown(white: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    white
        .iter()
        .map(|&w| {
            acc = 0.995 * acc + 0.05 * w;
            acc
        })
        .collect()
}

/// Energy of `signal` summed over the samples of each active frame.
pub fn active_energy(signal: &[f64], active: &[u8], stft: StftConfig) -> f64 {
    active
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == 1)
        .map(|(n, _)| {
            let s = n * stft.hop;
            signal[s..(s + stft.frame_len).min(signal.len())].iter().map(|v| v * v).sum::<f64>()
        })
        .sum()
}

/// Active-frame SNR in dB of target speech `x` against noise `v`.
pub fn measure_snr(x: &[f64], v: &[f64], cfg: &LabelConfig) -> Result<f64, SynthError> {
    let active = active_frames(x, cfg)?;
    let ex = active_energy(x, &active, cfg.stft);
    let ev = active_energy(v, &active, cfg.stft);
    Ok(10.0 * math::log10(ex / ev))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub mixture: Vec<f64>,
    pub scaled_noise: Vec<f64>,
    pub noise_gain: f64,
}

/// Scales the noise so the active-frame SNR of `target` against it is
/// `snr_db`, and adds it to `speech_rev`.
///
/// Active frames are those of the clean-level VAD on `target`.
pub fn mix_at_snr(speech_rev: &[f64], target: &[f64], noise: &[f64], snr_db: f64, cfg: &LabelConfig) -> Result<Mix, SynthError> {
    if speech_rev.len() != noise.len() || target.len() != noise.len() {
        return Err(SynthError::LengthMismatch(speech_rev.len(), noise.len()));
    }
    if noise.iter().all(|&v| v == 0.0) {
        return Err(SynthError::SilentNoise);
    }
    let active = active_frames(target, cfg)?;
    if !active.contains(&1) {
        return Err(SynthError::NoActiveSpeech);
    }
    let ex = active_energy(target, &active, cfg.stft);
    let ev = active_energy(noise, &active, cfg.stft);
    if ev == 0.0 {
        return Err(SynthError::SilentNoise);
    }
    let g = math::sqrt(ex / (ev * math::powf(10.0, snr_db / 10.0)));
    let scaled_noise: Vec<f64> = noise.iter().map(|&v| g * v).collect();
    let mixture = speech_rev.iter().zip(&scaled_noise).map(|(s, v)| s + v).collect();
    Ok(Mix { mixture, scaled_noise, noise_gain: g })
}

/// RMS level in dBFS, full scale = RMS 1.0.
pub fn rms_dbfs(x: &[f64]) -> f64 {
    let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    10.0 * math::log10(ms)
}

/// Gain that brings `x` to `target_dbfs`, reduced to a 0.99 peak when the
/// full gain would push any sample past 1.
pub fn level_gain(x: &[f64], target_dbfs: f64) -> Result<f64, SynthError> {
    let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(SynthError::SilentClip);
    }
    let rms = math::powf(10.0, rms_dbfs(x) / 20.0);
    let g = math::db_to_amplitude(target_dbfs) / rms;
    Ok(if peak * g > 1.0 + 1e-12 { 0.99 / peak } else { g })
}

pub fn level_augment(clip: &AudioClip, target_dbfs: f64) -> Result<AudioClip, SynthError> {
    let g = level_gain(&clip.samples_f64(), target_dbfs)?;
    Ok(clip.scaled(g))
}

/// Draws a mixing recipe.
pub fn draw_mix_spec(seed: u64, cfg: &SynthConfig) -> MixSpec {
    let mut rng = rng::rng_for(seed);
    let snr = Normal::new(cfg.snr_mean_db, cfg.snr_std_db).expect("validated std");
    let level = Normal::new(cfg.level_mean_dbfs, cfg.level_std_dbfs).expect("validated std");
    let snr_db = snr.sample(&mut rng);
    let level_dbfs = level.sample(&mut rng).min(0.0);
    let reverb = rng.random::<f64>() < cfg.reverb_prob;
    let (lo, hi) = cfg.rt60_range_s;
    let air_rt60_s = if hi > lo { rng.random_range(lo..hi) } else { lo };
    MixSpec { snr_db, level_dbfs, reverb, air_rt60_s, noise_kind: NoiseKind::White, seed }
}

/// One generated mixture plus the components its labels derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub index: usize,
    pub mixture: AudioClip,
    /// Target speech `h_win * s` after level augmentation.
    pub target: AudioClip,
    /// Scaled noise after level augmentation.
    pub noise: AudioClip,
    pub labels: LabelTrack,
    pub spec: MixSpec,
}

impl TrainingExample {
    /// Labels recomputed from the stored target and noise.
    pub fn recompute_labels(&self, cfg: &LabelConfig) -> Result<LabelTrack, LabelError> {
        labels::labels_from_target(&self.target.samples_f64(), &self.noise.samples_f64(), cfg)
    }
}

/// Example `index` of the split identified by `split_seed`.
pub fn generate_example<S: SignalSource + ?Sized>(
    index: usize,
    split_seed: u64,
    cfg: &SynthConfig,
    sources: &S,
) -> Result<TrainingExample, SynthError> {
    cfg.validate()?;
    let seed = rng::derive(split_seed, index as u64);
    let mut spec = draw_mix_spec(rng::derive(seed, streams::MIX_SPEC), cfg);
    let n = cfg.clip_samples();

    let speech = sources.speech(rng::derive(seed, streams::SPEECH), n)?.samples_f64();
    if speech.len() != n {
        return Err(SynthError::LengthMismatch(speech.len(), n));
    }
    let (speech_rev, target) = if spec.reverb {
        let air = gen_air(spec.air_rt60_s, spec.air_rt60_s + 0.05, rng::derive(seed, streams::AIR))?;
        let rev = fft::convolve_same_start(&speech, &air.samples_f64());
        let x = labels::target_speech(&speech, Some(&air), &cfg.labels)?;
        (rev, x)
    } else {
        (speech.clone(), speech)
    };

    let (noise_clip, kind) = sources.noise(rng::derive(seed, streams::NOISE), n)?;
    if let Some(kind) = kind {
        spec.noise_kind = kind;
    }
    let mut noise = noise_clip.samples_f64();
    if noise.len() != n {
        return Err(SynthError::LengthMismatch(noise.len(), n));
    }
    let shift = rng::rng_for(rng::derive(seed, streams::SHIFT)).random_range(0..n);
    noise.rotate_left(shift);

    let mix = mix_at_snr(&speech_rev, &target, &noise, spec.snr_db, &cfg.labels)?;
    let g = level_gain(&mix.mixture, spec.level_dbfs)?;
    let scale = |x: &[f64], id: &str| AudioClip::from_f64(&x.iter().map(|v| v * g).collect::<Vec<_>>(), format!("{id}:{index}"));
    let mixture = scale(&mix.mixture, "mix").expect("finite");
    let target = scale(&target, "target").expect("finite");
    let noise = scale(&mix.scaled_noise, "noise").expect("finite");
    let labels = labels::labels_from_target(&target.samples_f64(), &noise.samples_f64(), &cfg.labels)?;
    Ok(TrainingExample { index, mixture, target, noise, labels, spec })
}

/// `n_examples` examples of one split, in index order.
pub fn build_dataset<S: SignalSource + ?Sized>(
    n_examples: usize,
    split_seed: u64,
    cfg: &SynthConfig,
    sources: &S,
) -> Result<Vec<TrainingExample>, SynthError> {
    if n_examples == 0 {
        return Err(SynthError::InvalidConfig("at least one example is required"));
    }
    (0..n_examples).map(|i| generate_example(i, split_seed, cfg, sources)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn air_is_deterministic_and_validated() {
        assert_eq!(gen_air(0.3, 0.4, 9).unwrap(), gen_air(0.3, 0.4, 9).unwrap());
        assert_eq!(gen_air(5.0, 1.0, 9), Err(SynthError::InvalidRt60(5.0)));
        let h = gen_air(0.5, 0.6, 2).unwrap();
        let peak = h.samples().iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert_eq!(peak, 1.0);
        let d = labels::find_direct_path(&h).unwrap();
        assert!(d <= 80);
        assert_eq!(h.samples()[d], 1.0);
    }

    #[test]
    fn noise_has_unit_rms() {
        for kind in NoiseKind::ALL {
            let n = gen_noise(kind, 1.0, 3).samples_f64();
            assert!((rms_dbfs(&n)).abs() < 1e-4, "{kind:?}");
        }
    }

    #[test]
    fn unit_energy_zero_db_gives_unit_gain() {
        let cfg = LabelConfig::default();
        let n = 4096;
        // constant-envelope tone: every frame active
        let x: Vec<f64> = (0..n).map(|t| math::sin(2.0 * PI * 500.0 * t as f64 / 16000.0)).collect();
        let mix = mix_at_snr(&x, &x, &x, 0.0, &cfg).unwrap();
        assert!((mix.noise_gain - 1.0).abs() < 1e-12);
        let g0 = mix_at_snr(&x, &x, &x, 0.0, &cfg).unwrap().noise_gain;
        let g10 = mix_at_snr(&x, &x, &x, 10.0, &cfg).unwrap().noise_gain;
        assert!((g10 / g0 - math::powf(10.0, -0.5)).abs() < 1e-12);
    }

    #[test]
    fn mixing_errors() {
        let cfg = LabelConfig::default();
        let z = vec![0.0; 2048];
        let x: Vec<f64> = (0..2048).map(|t| (t as f64 * 0.1).sin()).collect();
        assert_eq!(mix_at_snr(&x, &x, &z, 0.0, &cfg), Err(SynthError::SilentNoise));
        assert_eq!(mix_at_snr(&z, &z, &x, 0.0, &cfg), Err(SynthError::NoActiveSpeech));
    }

    #[test]
    fn level_examples() {
        let x: Vec<f64> = (0..1000).map(|t| if t % 2 == 0 { 0.1 } else { -0.1 }).collect();
        assert!((level_gain(&x, -20.0).unwrap() - 1.0).abs() < 1e-12);
        let g = level_gain(&x, 0.0).unwrap();
        assert!((g * 0.1 - 1.0).abs() < 1e-12, "exactly full scale is not clipping");
        let g = level_gain(&x, 6.0).unwrap();
        assert!((g * 0.1 - 0.99).abs() < 1e-12);
        assert_eq!(level_gain(&[0.0; 4], -20.0), Err(SynthError::SilentClip));
    }

    #[test]
    fn mix_spec_level_is_clamped() {
        let cfg = SynthConfig { level_mean_dbfs: 10.0, ..SynthConfig::default() };
        for s in 0..50 {
            assert!(draw_mix_spec(s, &cfg).level_dbfs <= 0.0);
        }
    }
}

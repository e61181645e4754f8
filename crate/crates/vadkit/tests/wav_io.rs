use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use proptest::prelude::*;
use vadkit::wav::{read_wav, write_wav, write_wav_as, WavError, WavFormat};
use vadkit_core::AudioClip;

fn write_raw_i16(path: &Path, sr: u32, channels: u16, samples: &[i16]) {
    let spec = WavSpec { channels, sample_rate: sr, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut w = WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn constant_pcm16_normalizes_to_half() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.wav");
    write_raw_i16(&p, 16000, 1, &vec![16384; 16000]);
    let clip = read_wav(&p).unwrap();
    assert_eq!(clip.len(), 16000);
    assert_eq!(clip.sample_rate(), 16000);
    assert!(clip.samples().iter().all(|&s| s == 0.5));
}

#[test]
fn wrong_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.wav");
    write_raw_i16(&p, 48000, 1, &[0; 480]);
    assert!(matches!(read_wav(&p), Err(WavError::SampleRateMismatch(48000))));
}

#[test]
fn stereo_and_other_depths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.wav");
    write_raw_i16(&p, 16000, 2, &[0; 64]);
    assert!(matches!(read_wav(&p), Err(WavError::UnsupportedFormat(_))));

    let p24 = dir.path().join("24.wav");
    let spec = WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 24, sample_format: SampleFormat::Int };
    let mut w = WavWriter::create(&p24, spec).unwrap();
    for _ in 0..32 {
        w.write_sample(0i32).unwrap();
    }
    w.finalize().unwrap();
    assert!(matches!(read_wav(&p24), Err(WavError::UnsupportedFormat(_))));

    let junk = dir.path().join("junk.wav");
    std::fs::write(&junk, b"not a riff file at all").unwrap();
    assert!(matches!(read_wav(&junk), Err(WavError::UnsupportedFormat(_))));
}

#[test]
fn missing_and_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_wav(&dir.path().join("nope.wav")), Err(WavError::FileNotFound(_))));
    let p = dir.path().join("e.wav");
    write_raw_i16(&p, 16000, 1, &[]);
    assert!(matches!(read_wav(&p), Err(WavError::EmptyAudio)));

    let empty = AudioClip::new(Vec::new(), 16000, "e").unwrap();
    assert!(matches!(write_wav(&empty, &dir.path().join("out.wav")), Err(WavError::EmptyAudio)));
    assert!(!dir.path().join("out.wav").exists());
}

#[test]
fn out_of_range_samples_are_clamped() {
    let dir = tempfile::tempdir().unwrap();
    let clip = AudioClip::new(vec![1.5, -1.5, 0.25], 16000, "c").unwrap();
    let p = dir.path().join("c16.wav");
    write_wav(&clip, &p).unwrap();
    let back = read_wav(&p).unwrap();
    assert_eq!(back.samples(), &[32767.0 / 32768.0, -1.0, 0.25]);

    let pf = dir.path().join("cf.wav");
    write_wav_as(&clip, &pf, WavFormat::Float32).unwrap();
    assert_eq!(read_wav(&pf).unwrap().samples(), &[1.0, -1.0, 0.25]);
}

#[test]
fn sine_round_trip_within_one_lsb() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..16000).map(|n| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin()).collect();
    let clip = AudioClip::from_f64(&x, "sine").unwrap();
    let p = dir.path().join("sine.wav");
    write_wav(&clip, &p).unwrap();
    let back = read_wav(&p).unwrap();
    assert_eq!(back.len(), clip.len());
    let max_err = clip.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(max_err <= 1.0 / 32768.0, "{max_err}");

    let pf = dir.path().join("sine_f.wav");
    write_wav_as(&clip, &pf, WavFormat::Float32).unwrap();
    assert_eq!(read_wav(&pf).unwrap().samples(), clip.samples());
}

#[test]
fn float_files_are_read_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("f.wav");
    let spec = WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 32, sample_format: SampleFormat::Float };
    let mut w = WavWriter::create(&p, spec).unwrap();
    for v in [0.1f32, -0.3, 0.999] {
        w.write_sample(v).unwrap();
    }
    w.finalize().unwrap();
    assert_eq!(read_wav(&p).unwrap().samples(), &[0.1, -0.3, 0.999]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pcm16_round_trip_is_identity_within_one_lsb(samples in prop::collection::vec(-1.0f32..1.0, 1..2000)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.wav");
        let clip = AudioClip::new(samples, 16000, "p").unwrap();
        write_wav(&clip, &p).unwrap();
        let back = read_wav(&p).unwrap();
        prop_assert_eq!(back.len(), clip.len());
        prop_assert_eq!(back.sample_rate(), 16000);
        for (a, b) in clip.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        // re-writing a quantized clip is lossless
        let p2 = dir.path().join("p2.wav");
        write_wav(&back, &p2).unwrap();
        let again = read_wav(&p2).unwrap();
        prop_assert_eq!(again.samples(), back.samples());
    }
}

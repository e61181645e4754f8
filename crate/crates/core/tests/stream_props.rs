mod common;

use proptest::prelude::*;
use rand::Rng;
use vadkit_core::dsp::{clip_features, StftConfig};
use vadkit_core::eval;
use vadkit_core::nn::{CrnModel, HeadKind};
use vadkit_core::stream::{batch_detect, FeatureStream, PostConfig, StreamingDetector};
use vadkit_core::synth::gen_pseudo_speech;
use vadkit_core::AudioClip;

fn noisy_speech(seconds: f64, seed: u64) -> AudioClip {
    let s = gen_pseudo_speech(seconds, seed).unwrap();
    let mut r = common::rng(seed);
    let x: Vec<f64> = s.samples().iter().map(|&v| v as f64 * 0.5 + r.random_range(-0.01..0.01)).collect();
    AudioClip::from_f64(&x, "noisy").unwrap()
}

#[test]
fn incremental_features_equal_batch_features() {
    let clip = noisy_speech(1.0, 3);
    let stft = StftConfig::default();
    let batch = clip_features(&clip, stft).unwrap();
    let mut fs = FeatureStream::new(stft).unwrap();
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for chunk in clip.samples().chunks(37) {
        fs.push(chunk, |f| frames.push(f.to_vec()));
    }
    assert_eq!(frames.len(), batch.n_frames());
    assert_eq!(frames.len(), stft.frame_count(clip.len()));
    for (n, f) in frames.iter().enumerate() {
        for (a, b) in f.iter().zip(batch.frame(n)) {
            assert!((a - b).abs() <= 1e-12, "frame {n}: {a} vs {b}");
        }
    }
}

#[test]
fn standard_post_window_is_25_frames() {
    let p = PostConfig::standard(&StftConfig::default());
    assert_eq!(p.window_frames, 25);
    assert_eq!(p.percentile, 90.0);
}

#[test]
fn streaming_detector_matches_batch_detect() {
    let model = CrnModel::<f32>::new(&[HeadKind::Vad, HeadKind::Vnr], 21).unwrap();
    let clip = noisy_speech(2.0, 4);
    let stft = StftConfig::default();
    let post = Some(PostConfig::standard(&stft));
    let batch = batch_detect(&model, &clip, stft, post).unwrap();

    let mut det = StreamingDetector::new(&model, stft, post).unwrap();
    let mut out = Vec::new();
    let mut r = common::rng(9);
    let mut pos = 0;
    while pos < clip.len() {
        let n = r.random_range(1..700).min(clip.len() - pos);
        det.push(&clip.samples()[pos..pos + n], &mut out).unwrap();
        pos += n;
    }
    assert_eq!(out.len(), batch.len());
    assert_eq!(det.frames_emitted(), stft.frame_count(clip.len()));
    for (s, b) in out.iter().zip(&batch) {
        assert_eq!(s.frame, b.frame);
        for (x, y) in s.raw.iter().zip(&b.raw) {
            assert!((x - y).abs() <= 1e-5, "frame {}: {x} vs {y}", s.frame);
        }
        for (x, y) in s.post.iter().zip(&b.post) {
            assert!((x - y).abs() <= 1e-5);
        }
        assert_eq!(s.post.len(), 2);
    }

    // post column is the batch filter applied to the streamed raw column
    let raw0: Vec<f64> = out.iter().map(|o| o.raw[0] as f64).collect();
    let want = eval::postprocess(&raw0, 25, 90.0);
    for (o, w) in out.iter().zip(&want) {
        assert_eq!(o.post[0], *w);
    }

    det.reset();
    let mut again = Vec::new();
    det.push(clip.samples(), &mut again).unwrap();
    let first: Vec<_> = out.iter().map(|o| o.raw.clone()).collect();
    let second: Vec<_> = again.iter().map(|o| o.raw.clone()).collect();
    assert_eq!(first, second);
}

#[test]
fn detector_without_post_leaves_post_empty() {
    let model = CrnModel::<f32>::new(&[HeadKind::Vad], 1).unwrap();
    let clip = noisy_speech(0.5, 1);
    let mut det = StreamingDetector::new(&model, StftConfig::default(), None).unwrap();
    let mut out = Vec::new();
    det.push(clip.samples(), &mut out).unwrap();
    assert!(!out.is_empty());
    assert!(out.iter().all(|o| o.post.is_empty() && o.raw.len() == 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn block_size_does_not_change_frame_count(len in 0usize..3000, block in 1usize..600) {
        let stft = StftConfig::default();
        let mut fs = FeatureStream::new(stft).unwrap();
        let samples = vec![0.01f32; len];
        let mut n = 0;
        for c in samples.chunks(block) {
            fs.push(c, |_| n += 1);
        }
        prop_assert_eq!(n, stft.frame_count(len));
    }
}

mod common;

use proptest::prelude::*;
use rand::Rng;
use vadkit_core::eval::{auc_by_snr, eer, postprocess, roc_auc, ClipScores, DEFAULT_SNR_EDGES};

/// Pairwise Mann-Whitney statistic with ties counted one half.
fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / pairs
}

fn random_instance(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut r = common::rng(seed);
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    // coarse quantization forces many ties
    let scores = labels.iter().map(|&l| ((r.random_range(0.0f64..1.0) + if l { 0.3 } else { 0.0 }) * 20.0).round() / 20.0).collect();
    (scores, labels)
}

#[test]
fn grouped_roc_equals_mann_whitney() {
    for seed in 0..50 {
        let (s, l) = random_instance(200, seed);
        let roc = roc_auc(&s, &l).unwrap();
        assert!((roc.auc - mann_whitney(&s, &l)).abs() < 1e-9, "seed {seed}");
        assert!(roc.points.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roc_equals_pairwise_statistic(n in 2usize..500, seed in any::<u64>()) {
        let (s, l) = random_instance(n, seed);
        prop_assert!((roc_auc(&s, &l).unwrap().auc - mann_whitney(&s, &l)).abs() < 1e-9);
    }

    #[test]
    fn auc_ignores_monotone_transforms(seed in any::<u64>(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let (s, l) = random_instance(150, seed);
        let t: Vec<f64> = s.iter().map(|x| (a * x + b).exp() + x * x * x).collect();
        prop_assert!((roc_auc(&s, &l).unwrap().auc - roc_auc(&t, &l).unwrap().auc).abs() < 1e-12);
    }

    #[test]
    fn postprocess_is_monotone(x in prop::collection::vec(0.0f64..1.0, 1..120), bump in prop::collection::vec(0.0f64..0.5, 120)) {
        let y: Vec<f64> = x.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let px = postprocess(&x, 25, 90.0);
        let py = postprocess(&y, 25, 90.0);
        prop_assert!(px.iter().zip(&py).all(|(a, b)| b >= a));
    }

    #[test]
    fn postprocess_is_causal(x in prop::collection::vec(0.0f64..1.0, 2..120), at in any::<prop::sample::Index>(), v in 0.0f64..1.0) {
        let t = at.index(x.len() - 1);
        let mut y = x.clone();
        y[t + 1] = v;
        let px = postprocess(&x, 25, 90.0);
        let py = postprocess(&y, 25, 90.0);
        prop_assert_eq!(&px[..=t], &py[..=t]);
    }

    #[test]
    fn snr_bins_ignore_clip_order(seed in any::<u64>()) {
        let clips = random_clips(30, seed);
        let mut rev = clips.clone();
        rev.reverse();
        let a = auc_by_snr(&clips, &DEFAULT_SNR_EDGES).unwrap();
        let b = auc_by_snr(&rev, &DEFAULT_SNR_EDGES).unwrap();
        prop_assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((x.mean_auc - y.mean_auc).abs() < 1e-12 && x.count == y.count);
        }
    }
}

fn random_clips(n: usize, seed: u64) -> Vec<ClipScores> {
    let mut r = common::rng(seed);
    (0..n)
        .map(|i| {
            let (scores, labels) = random_instance(40, seed.wrapping_add(i as u64));
            ClipScores { snr_db: r.random_range(-15.0..25.0), scores, labels }
        })
        .collect()
}

#[test]
fn merged_bins_are_count_weighted_means() {
    let clips = random_clips(60, 3);
    let fine = auc_by_snr(&clips, &DEFAULT_SNR_EDGES).unwrap();
    let coarse = auc_by_snr(&clips, &[-10.0, 0.0, 10.0, 20.0]).unwrap();
    assert_eq!(fine.rows.iter().map(|r| r.count).sum::<usize>(), clips.len());
    for c in &coarse.rows {
        let parts: Vec<_> = fine.rows.iter().filter(|f| f.bin_lo >= c.bin_lo && f.bin_hi <= c.bin_hi).collect();
        let n: usize = parts.iter().map(|p| p.count).sum();
        let mean = parts.iter().map(|p| p.mean_auc * p.count as f64).sum::<f64>() / n as f64;
        assert_eq!(n, c.count);
        assert!((mean - c.mean_auc).abs() < 1e-12);
    }
}

/// Exhaustive EER: every threshold in the score set plus +inf.
fn eer_scan(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for th in thresholds {
        let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= th && !**l).count() as f64;
        let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= th && **l).count() as f64;
        let (fpr, fnr) = (fp / neg, 1.0 - tp / pos);
        if (fpr - fnr).abs() < best.0 {
            best = ((fpr - fnr).abs(), (fpr + fnr) / 2.0, th);
        }
    }
    (best.1, best.2)
}

#[test]
fn eer_matches_threshold_scan() {
    let scores = [0.9, 0.7, 0.6, 0.4, 0.3, 0.1];
    let labels = [true, false, true, true, false, false];
    let e = eer(&scores, &labels).unwrap();
    let (rate, th) = eer_scan(&scores, &labels);
    assert_eq!((e.rate, e.threshold), (rate, th));
    assert!((e.rate - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(e.threshold, 0.6);
    for seed in 0..20 {
        let (s, l) = random_instance(80, seed);
        let e = eer(&s, &l).unwrap();
        assert_eq!((e.rate, e.threshold), eer_scan(&s, &l));
    }
}

#[test]
fn eer_of_constant_scores_is_one_half() {
    let mut r = common::rng(1);
    let mut labels: Vec<bool> = (0..50).map(|_| r.random_bool(0.5)).collect();
    labels[0] = !labels[1];
    assert_eq!(eer(&[0.3; 50], &labels).unwrap().rate, 0.5);
}

/// Positions where a lone spike produces a full-scale output, found by
/// sorting each trailing window.
fn spike_response(len: usize, spike: usize) -> Vec<usize> {
    let mut x = vec![0.0; len];
    x[spike] = 1.0;
    (0..len)
        .filter(|&t| {
            let lo = (t + 1).saturating_sub(25);
            let mut w: Vec<f64> = x[lo..=t].to_vec();
            w.sort_by(f64::total_cmp);
            let rank = (0.9 * w.len() as f64).ceil() as usize;
            w[rank - 1] == 1.0
        })
        .collect()
}

#[test]
fn spike_example() {
    for spike in 0..60 {
        let mut x = vec![0.0; 60];
        x[spike] = 1.0;
        let y = postprocess(&x, 25, 90.0);
        let ones: Vec<usize> = (0..60).filter(|&t| y[t] == 1.0).collect();
        assert_eq!(ones, spike_response(60, spike), "spike at {spike}");
        assert!(y.iter().all(|&v| v == 0.0 || v == 1.0));
    }
    // rank 23 of 25 never selects a lone spike in a full window; while the
    // window is still shorter than 10 frames it does, so a spike at frame 6
    // survives for exactly frames 6, 7 and 8
    let mut x = vec![0.0; 60];
    x[6] = 1.0;
    let y = postprocess(&x, 25, 90.0);
    assert_eq!((0..60).filter(|&t| y[t] == 1.0).collect::<Vec<_>>(), vec![6, 7, 8]);
    let mut x = vec![0.0; 60];
    x[30] = 1.0;
    assert!(postprocess(&x, 25, 90.0).iter().all(|&v| v == 0.0));
}

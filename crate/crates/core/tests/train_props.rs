mod common;

use proptest::prelude::*;
use rand::Rng;
use vadkit_core::nn::{crn_forward, CrnModel, HeadKind};
use vadkit_core::train::{
    adamw_step, autoclip_threshold, backward, bce_loss, train_loop, train_loop_with, AdamState, AdamWConfig, AutoClip, GradTape,
    LossKind, SeqRef, Sequence, TrainConfig,
};

#[test]
fn soft_target_bce_is_minimal_at_the_target() {
    let scan: Vec<(f64, f64)> = (1..100).map(|i| i as f64 / 100.0).map(|p| (p, bce_loss(&[p], &[0.5]).unwrap())).collect();
    let best = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bce_never_beats_matched_prediction(z in 0.0f64..=1.0, p in 0.0f64..=1.0) {
        prop_assert!(bce_loss(&[p], &[z]).unwrap() >= bce_loss(&[z], &[z]).unwrap() - 1e-12);
    }

    #[test]
    fn clipping_never_increases_the_norm(norms in prop::collection::vec(0.01f64..100.0, 1..30)) {
        let mut clip = AutoClip::new(10.0);
        let m = CrnModel::<f64>::new(&[HeadKind::Vad], 0).unwrap();
        for n in norms {
            let mut tape = GradTape::zeros(&m);
            tape.grads.out.bias.data_mut()[0] = n;
            let out = clip.clip(&mut tape);
            prop_assert!(out.clipped_norm <= n * (1.0 + 1e-12));
            prop_assert!((tape.norm() - n.min(out.threshold)).abs() <= 1e-9 * n);
        }
    }
}

#[test]
fn autoclip_examples() {
    let h: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(autoclip_threshold(&h, 10.0), 1.0);

    let m = CrnModel::<f64>::new(&[HeadKind::Vad], 0).unwrap();
    let mut clip = AutoClip::new(10.0);
    for _ in 0..5 {
        let mut tape = GradTape::zeros(&m);
        tape.grads.fc1.bias.data_mut()[3] = 2.0;
        let out = clip.clip(&mut tape);
        assert_eq!(out.threshold, 2.0);
        assert_eq!(tape.norm(), 2.0);
    }
    let mut tape = GradTape::zeros(&m);
    tape.grads.fc1.bias.data_mut()[0] = 6.0;
    tape.grads.fc1.bias.data_mut()[1] = 8.0;
    let out = clip.clip(&mut tape);
    assert_eq!((out.raw_norm, out.threshold, out.clipped_norm), (10.0, 2.0, 2.0));
    assert!((tape.norm() - 2.0).abs() < 1e-12);
}

#[test]
fn adamw_examples() {
    let model = CrnModel::<f64>::new(&[HeadKind::Vad], 1).unwrap();
    let zero = GradTape::zeros(&model);

    let mut m = model.clone();
    let mut st = AdamState::new(&m);
    adamw_step(&mut m, &zero, &mut st, &AdamWConfig { weight_decay: 0.0, ..AdamWConfig::default() }).unwrap();
    assert_eq!(m, model);

    let cfg = AdamWConfig { lr: 1e-3, weight_decay: 0.01, ..AdamWConfig::default() };
    let mut m = model.clone();
    let mut st = AdamState::new(&m);
    adamw_step(&mut m, &zero, &mut st, &cfg).unwrap();
    for (a, b) in m.tensors().iter().zip(model.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y * (1.0 - 1e-5)).abs() <= 1e-15);
        }
    }

    let mut g = GradTape::zeros(&model);
    g.grads.out.bias.data_mut()[0] = -0.3;
    let cfg = AdamWConfig { lr: 1e-2, weight_decay: 0.0, ..AdamWConfig::default() };
    let mut m = model.clone();
    let mut st = AdamState::new(&m);
    adamw_step(&mut m, &g, &mut st, &cfg).unwrap();
    let step = m.out.bias.data()[0] - model.out.bias.data()[0];
    assert!((step - 1e-2 * 0.3 / (0.3 + 1e-8)).abs() < 1e-15);
    assert!((step - 1e-2).abs() < 1e-9);
}

#[test]
fn adamw_rejects_mismatched_state() {
    let mut m = CrnModel::<f64>::new(&[HeadKind::Vad], 1).unwrap();
    let other = CrnModel::<f64>::new(&[HeadKind::Vad, HeadKind::Vnr], 1).unwrap();
    let mut st = AdamState::new(&other);
    assert!(adamw_step(&mut m, &GradTape::zeros(&other), &mut st, &AdamWConfig::default()).is_err());
}

#[test]
fn matched_soft_targets_are_stationary() {
    let m = common::random_model(&[HeadKind::Vad, HeadKind::Vnr], 2);
    let feats = common::features(8, 3);
    let y = crn_forward(&feats, &m).unwrap();
    let vad: Vec<f64> = y.iter().step_by(2).copied().collect();
    let vnr: Vec<f64> = y.iter().skip(1).step_by(2).copied().collect();
    let (_, tape) = backward(&m, &[SeqRef { features: &feats, vad: &vad, vnr_unit: &vnr }], LossKind::MultiBceBce, 0.2).unwrap();
    assert!(tape.norm() <= 1e-6, "{}", tape.norm());
}

#[test]
fn wrong_arity_is_rejected() {
    let m = CrnModel::<f64>::new(&[HeadKind::Vad], 0).unwrap();
    let f = common::features(2, 0);
    let r = backward(&m, &[SeqRef { features: &f, vad: &[0.0, 1.0], vnr_unit: &[0.0, 1.0] }], LossKind::MultiBceMae, 0.2);
    assert!(r.is_err());
}

/// Clips whose VAD label is a simple function of the features.
fn toy_set(n: usize, t: usize, seed: u64) -> Vec<Sequence> {
    let mut r = common::rng(seed);
    (0..n)
        .map(|_| {
            let mut features = Vec::with_capacity(t * 64);
            let mut vad = Vec::with_capacity(t);
            let mut active = false;
            for _ in 0..t {
                if r.random_bool(0.1) {
                    active = !active;
                }
                let level = if active { 0.5 } else { -2.0 };
                features.extend((0..64).map(|_| (level + r.random_range(-0.5..0.5)) as f32));
                vad.push(if active { 1.0 } else { 0.0 });
            }
            let vnr_unit = vad.iter().map(|v| 0.2 + 0.6 * v).collect();
            Sequence { features, vad, vnr_unit, snr_db: 0.0 }
        })
        .collect()
}

fn toy_config(kind: LossKind) -> TrainConfig {
    TrainConfig {
        loss_kind: kind,
        optimizer: AdamWConfig { lr: 1e-3, ..AdamWConfig::default() },
        batch_clips: 5,
        clip_len_s: 0.5,
        clip_percentile: 100.0,
        max_epochs: 10,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn constant_validation_stops_after_patience() {
    let set = toy_set(3, 20, 1);
    let cfg = TrainConfig { patience: 1, ..toy_config(LossKind::VadBce) };
    let out = train_loop_with(&cfg, &set, |_| Ok(0.7), |_| {}).unwrap();
    assert_eq!(out.history.epochs.len(), 2);
    assert!(out.history.stopped_early);
    assert_eq!(out.history.best_epoch, 0);
}

#[test]
fn overfit_loss_decreases() {
    let set = toy_set(5, 40, 2);
    let out = train_loop(&toy_config(LossKind::VadBce), &set, &set).unwrap();
    let losses: Vec<f64> = out.history.epochs.iter().map(|e| e.mean_loss).collect();
    assert_eq!(losses.len(), 10);
    let rises = losses.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(rises <= 1, "{losses:?}");
    assert!(losses[9] < losses[0]);
}

#[test]
fn training_is_deterministic() {
    let set = toy_set(6, 30, 4);
    let cfg = TrainConfig { max_epochs: 2, batch_clips: 4, ..toy_config(LossKind::MultiBceMae) };
    let a = train_loop(&cfg, &set, &set).unwrap();
    let b = train_loop(&cfg, &set, &set).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    assert_eq!(a.model.n_out(), 2);
}

#[test]
fn config_validation() {
    let set = toy_set(1, 10, 0);
    for cfg in [
        TrainConfig { alpha: 1.5, ..TrainConfig::default() },
        TrainConfig { optimizer: AdamWConfig { lr: 0.0, ..AdamWConfig::default() }, ..TrainConfig::default() },
        TrainConfig { batch_clips: 0, ..TrainConfig::default() },
    ] {
        assert!(train_loop(&cfg, &set, &set).is_err());
    }
    assert!(train_loop(&TrainConfig::default(), &[], &set).is_err());
}

mod common;

use proptest::prelude::*;
use rand::Rng;
use vadkit_core::nn::{
    conv2d_causal, conv_stack_forward, crn_forward, crn_step, gru_step, prelu, CrnModel, GruLayer, HeadKind, StreamState,
    Tensor, CONV_CHANNELS, FREQ_DIMS, GRU_INPUT,
};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct 6-loop causal convolution on `[T, C, F]`.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]) -> Tensor<f64> {
    let (t_len, ci_n, f_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let co_n = w.shape()[0];
    let f_out = (f_in + 2 - 3) / 2 + 1;
    let xv = |t: isize, c: usize, f: isize| -> f64 {
        if t < 0 || f < 0 || f >= f_in as isize {
            0.0
        } else {
            x.data()[(t as usize * ci_n + c) * f_in + f as usize]
        }
    };
    let mut out = vec![0.0; t_len * co_n * f_out];
    for t in 0..t_len {
        for co in 0..co_n {
            for fo in 0..f_out {
                let mut acc = b[co];
                for ci in 0..ci_n {
                    for kt in 0..2 {
                        for kf in 0..3 {
                            let wv = w.data()[((co * ci_n + ci) * 2 + kt) * 3 + kf];
                            acc += wv * xv(t as isize - 1 + kt as isize, ci, (2 * fo + kf) as isize - 1);
                        }
                    }
                }
                out[(t * co_n + co) * f_out + fo] = acc;
            }
        }
    }
    Tensor::from_vec(&[t_len, co_n, f_out], out).unwrap()
}

fn naive_gru(h: &[f64], x: &[f64], g: &GruLayer<f64>) -> Vec<f64> {
    let hd = h.len();
    let inp = x.len();
    let (wi, wh, b) = (g.w_ih.data(), g.w_hh.data(), g.bias.data());
    let lin = |row: usize, v: &[f64], w: &[f64], n: usize| -> f64 { (0..n).map(|k| w[row * n + k] * v[k]).sum() };
    let mut out = vec![0.0; hd];
    let mut rh = vec![0.0; hd];
    let mut z = vec![0.0; hd];
    for j in 0..hd {
        z[j] = sigmoid(lin(j, x, wi, inp) + lin(j, h, wh, hd) + b[j]);
        let r = sigmoid(lin(hd + j, x, wi, inp) + lin(hd + j, h, wh, hd) + b[hd + j]);
        rh[j] = r * h[j];
    }
    for j in 0..hd {
        let n = (lin(2 * hd + j, x, wi, inp) + lin(2 * hd + j, &rh, wh, hd) + b[2 * hd + j]).tanh();
        out[j] = (1.0 - z[j]) * h[j] + z[j] * n;
    }
    out
}

#[test]
fn layer_one_shape() {
    let m = CrnModel::<f64>::new(&[HeadKind::Vad], 0).unwrap();
    let y = conv2d_causal(&Tensor::zeros(&[1, 1, 64]), &m.conv[0]).unwrap();
    assert_eq!(y.shape(), &[1, 16, 32]);
}

#[test]
fn conv_stack_shape_contract() {
    let m = CrnModel::<f64>::new(&[HeadKind::Vad], 0).unwrap();
    let mut x = Tensor::from_vec(&[3, 1, 64], common::features(3, 9)).unwrap();
    for l in 0..4 {
        x = conv2d_causal(&x, &m.conv[l]).unwrap();
        assert_eq!(x.shape(), &[3, CONV_CHANNELS[l + 1], FREQ_DIMS[l + 1]]);
    }
    assert_eq!(CONV_CHANNELS[4] * FREQ_DIMS[4], 512);
    assert_eq!(GRU_INPUT, 512);
    assert_eq!(conv_stack_forward(&common::features(3, 9), &m).unwrap().len(), 3 * 512);
}

#[test]
fn conv_matches_direct_loops() {
    let m = common::random_model(&[HeadKind::Vad], 2);
    let x = Tensor::from_vec(&[3, 1, 64], common::features(3, 5)).unwrap();
    let got = conv2d_causal(&x, &m.conv[0]).unwrap();
    let want = naive_conv(&x, &m.conv[0].weight, m.conv[0].bias.data());
    let diff = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");

    // a deeper layer with many input channels
    let mut r = common::rng(8);
    let x = Tensor::from_vec(&[4, 32, 16], (0..4 * 32 * 16).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let got = conv2d_causal(&x, &m.conv[2]).unwrap();
    let want = naive_conv(&x, &m.conv[2].weight, m.conv[2].bias.data());
    let diff = got.data().iter().zip(want.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn conv_frame_depends_on_previous_frame_only() {
    let m = common::random_model(&[HeadKind::Vad], 2);
    let base = common::features(6, 1);
    let y0 = conv2d_causal(&Tensor::from_vec(&[6, 1, 64], base.clone()).unwrap(), &m.conv[0]).unwrap();
    let mut pert = base;
    pert[2 * 64 + 10] += 1.0;
    let y1 = conv2d_causal(&Tensor::from_vec(&[6, 1, 64], pert).unwrap(), &m.conv[0]).unwrap();
    let per_frame = 16 * 32;
    for t in 0..6 {
        let same = y0.data()[t * per_frame..(t + 1) * per_frame] == y1.data()[t * per_frame..(t + 1) * per_frame];
        assert_eq!(same, !(t == 2 || t == 3), "frame {t}");
    }
}

#[test]
fn gru_closed_form_and_oracle() {
    let m = common::random_model(&[HeadKind::Vad], 6);
    let mut r = common::rng(3);
    let h: Vec<f64> = (0..512).map(|_| r.random_range(-0.9..0.9)).collect();
    let x: Vec<f64> = (0..512).map(|_| r.random_range(-2.0..2.0)).collect();
    let got = gru_step(&h, &x, &m.gru);
    let want = naive_gru(&h, &x, &m.gru);
    let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "{diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gru_state_stays_bounded(seed in 0u64..1000, scale in 0.1f64..3.0) {
        let m = CrnModel::<f64>::new(&[HeadKind::Vad], seed).unwrap();
        let mut r = common::rng(seed);
        let h: Vec<f64> = (0..512).map(|_| r.random_range(-scale..scale)).collect();
        let x: Vec<f64> = (0..512).map(|_| r.random_range(-5.0..5.0)).collect();
        let bound = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let out = gru_step(&h, &x, &m.gru);
        prop_assert!(out.iter().all(|v| v.abs() <= bound + 1e-12));
    }

    #[test]
    fn prelu_is_piecewise_linear(x in -10.0f64..10.0, a in 0.0f64..1.0) {
        let y = prelu(x, a);
        prop_assert_eq!(y, if x >= 0.0 { x } else { a * x });
        prop_assert_eq!(prelu(x, 1.0), x);
    }
}

#[test]
fn outputs_are_probabilities_with_one_row_per_frame() {
    for heads in [&[HeadKind::Vad][..], &[HeadKind::Vad, HeadKind::Vnr][..]] {
        let m = CrnModel::<f32>::new(heads, 4).unwrap();
        let feats: Vec<f32> = common::features(10, 2).iter().map(|&v| v as f32 * 3.0).collect();
        let y = crn_forward(&feats, &m).unwrap();
        assert_eq!(y.len(), 10 * heads.len());
        assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn perturbing_a_frame_never_changes_the_past() {
    let m = common::random_model(&[HeadKind::Vad, HeadKind::Vnr], 5);
    let base = common::features(12, 3);
    let y0 = crn_forward(&base, &m).unwrap();
    for t in [0, 5, 11] {
        let mut p = base.clone();
        p[t * 64 + 7] += 0.5;
        let y1 = crn_forward(&p, &m).unwrap();
        assert_eq!(y0[..t * 2], y1[..t * 2]);
        assert_ne!(y0[t * 2..t * 2 + 2], y1[t * 2..t * 2 + 2]);
    }
}

#[test]
fn conv_receptive_field_is_five_frames() {
    let m = common::random_model(&[HeadKind::Vad], 7);
    let t_len = 16;
    let base = common::features(t_len, 4);
    let c0 = conv_stack_forward(&base, &m).unwrap();
    let t0 = 5;
    let mut p = base;
    for f in 0..64 {
        p[t0 * 64 + f] += 1.0;
    }
    let c1 = conv_stack_forward(&p, &m).unwrap();
    for t in 0..t_len {
        let same = c0[t * 512..(t + 1) * 512] == c1[t * 512..(t + 1) * 512];
        assert_eq!(same, t < t0 || t > t0 + 4, "frame {t}");
    }
}

#[test]
fn prefix_forward_matches_full_forward() {
    let m = common::random_model(&[HeadKind::Vnr], 8);
    let feats = common::features(20, 6);
    let full = crn_forward(&feats, &m).unwrap();
    let prefix = crn_forward(&feats[..7 * 64], &m).unwrap();
    for (a, b) in prefix.iter().zip(&full[..7]) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn streaming_matches_batch() {
    let m = CrnModel::<f32>::new(&[HeadKind::Vad, HeadKind::Vnr], 11).unwrap();
    let feats: Vec<f32> = common::features(50, 12).iter().map(|&v| v as f32).collect();
    let batch = crn_forward(&feats, &m).unwrap();
    let mut state = StreamState::new(&m);
    let mut max_diff = 0.0f32;
    for t in 0..50 {
        let y = crn_step(&m, &mut state, &feats[t * 64..(t + 1) * 64]).unwrap();
        for k in 0..2 {
            max_diff = max_diff.max((y[k] - batch[t * 2 + k]).abs());
        }
    }
    assert!(max_diff <= 1e-5, "{max_diff}");

    let first = crn_step(&m, &mut StreamState::new(&m), &feats[..64]).unwrap();
    let one = crn_forward(&feats[..64], &m).unwrap();
    assert!(first.iter().zip(&one).all(|(a, b)| (a - b).abs() <= 1e-6));

    state.reset();
    let again: Vec<f32> = (0..5).flat_map(|t| crn_step(&m, &mut state, &feats[t * 64..(t + 1) * 64]).unwrap()).collect();
    state.reset();
    let twice: Vec<f32> = (0..5).flat_map(|t| crn_step(&m, &mut state, &feats[t * 64..(t + 1) * 64]).unwrap()).collect();
    assert_eq!(again, twice);
}

#[test]
fn step_rejects_wrong_width() {
    let m = CrnModel::<f32>::new(&[HeadKind::Vad], 0).unwrap();
    let mut s = StreamState::new(&m);
    assert!(crn_step(&m, &mut s, &[0.0; 63]).is_err());
}

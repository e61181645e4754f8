//! Frame-by-frame inference.

use alloc::vec;
use alloc::vec::Vec;

use super::layers::{conv_out_freq, gru_step, prelu};
use super::{shape_err, ConvLayer, CrnModel, NnError, KERNEL_F, KERNEL_T, N_INPUT};
use crate::linalg::{dot, matvec};
use crate::math::Real;

/// Recurrent state carried between frames: the previous input of every conv
/// layer (channel-last `[F, C]`) and the GRU hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState<S> {
    prev: Vec<Vec<S>>,
    h: Vec<S>,
    frames: u64,
}

impl<S: Real> StreamState<S> {
    pub fn new(model: &CrnModel<S>) -> Self {
        let mut f = N_INPUT;
        let prev = model
            .conv
            .iter()
            .map(|l| {
                let v = vec![S::ZERO; f * l.c_in()];
                f = conv_out_freq(f);
                v
            })
            .collect();
        StreamState { prev, h: vec![S::ZERO; model.gru.hidden()], frames: 0 }
    }

    pub fn reset(&mut self) {
        for p in &mut self.prev {
            p.iter_mut().for_each(|v| *v = S::ZERO);
        }
        self.h.iter_mut().for_each(|v| *v = S::ZERO);
        self.frames = 0;
    }

    pub fn hidden(&self) -> &[S] {
        &self.h
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames
    }
}

fn conv_frame<S: Real>(layer: &ConvLayer<S>, prev: &[S], cur: &[S], f_in: usize) -> Vec<S> {
    let (c_in, c_out) = (layer.c_in(), layer.c_out());
    let kdim = c_in * KERNEL_T * KERNEL_F;
    let f_out = conv_out_freq(f_in);
    let w = layer.weight.data();
    let (bias, slope) = (layer.bias.data(), layer.slope.data());
    let mut col = vec![S::ZERO; kdim];
    let mut out = vec![S::ZERO; f_out * c_out];
    for fo in 0..f_out {
        col.iter_mut().for_each(|v| *v = S::ZERO);
        for (kt, frame) in [prev, cur].into_iter().enumerate() {
            for kf in 0..KERNEL_F {
                let fi = 2 * fo + kf;
                if fi == 0 || fi > f_in {
                    continue;
                }
                for ci in 0..c_in {
                    col[ci * KERNEL_T * KERNEL_F + kt * KERNEL_F + kf] = frame[(fi - 1) * c_in + ci];
                }
            }
        }
        for co in 0..c_out {
            let z = dot(&w[co * kdim..][..kdim], &col) + bias[co];
            out[fo * c_out + co] = prelu(z, slope[co]);
        }
    }
    out
}

/// Advances the network by one 64-bin feature frame and returns the
/// `n_out` outputs for that frame.
pub fn crn_step<S: Real>(model: &CrnModel<S>, state: &mut StreamState<S>, frame: &[S]) -> Result<Vec<S>, NnError> {
    if frame.len() != N_INPUT {
        return Err(shape_err("feature frame", &[N_INPUT], &[frame.len()]));
    }
    if state.prev.len() != model.conv.len() || state.h.len() != model.gru.hidden() {
        return Err(shape_err("stream state", &[model.conv.len(), model.gru.hidden()], &[state.prev.len(), state.h.len()]));
    }
    let mut act = frame.to_vec();
    let mut f_in = N_INPUT;
    for (layer, prev) in model.conv.iter().zip(state.prev.iter_mut()) {
        let next = conv_frame(layer, prev, &act, f_in);
        *prev = act;
        act = next;
        f_in = conv_out_freq(f_in);
    }
    let c4 = model.conv.last().map(|l| l.c_out()).unwrap_or(1);
    let mut x = vec![S::ZERO; act.len()];
    for f in 0..f_in {
        for c in 0..c4 {
            x[c * f_in + f] = act[f * c4 + c];
        }
    }
    state.h = gru_step(&state.h, &x, &model.gru);
    state.frames += 1;

    let slope = model.fc1.slope.as_ref().expect("hidden dense layer has slopes").data();
    let mut hid = vec![S::ZERO; slope.len()];
    matvec(model.fc1.weight.data(), &state.h, Some(model.fc1.bias.data()), &mut hid);
    for (v, &a) in hid.iter_mut().zip(slope) {
        *v = prelu(*v, a);
    }
    let mut out = vec![S::ZERO; model.n_out()];
    matvec(model.out.weight.data(), &hid, Some(model.out.bias.data()), &mut out);
    Ok(out.into_iter().map(|v| v.sigmoid()).collect())
}

//! Batched forward and backward passes.
//!
//! Activations are time-major: element `(t, b, f, c)` of a conv activation
//! lives at `((t * batch + b) * freq + f) * channels + c`, and sequence
//! activations at `(t * batch + b) * width + i`. Convolutions are lowered to
//! GEMMs over an im2col matrix whose column index is `c_in * 6 + kt * 3 + kf`,
//! which lines up with the `[c_out, c_in, 2, 3]` weight layout.

use alloc::vec;
use alloc::vec::Vec;

use super::{shape_err, ConvLayer, CrnModel, Dense, GruLayer, NnError, Tensor, KERNEL_F, KERNEL_T, N_INPUT};
use crate::linalg::{gemm, matvec, MatMut, MatRef};
use crate::math::Real;

const KSIZE: usize = KERNEL_T * KERNEL_F;

#[inline]
pub fn prelu<S: Real>(x: S, slope: S) -> S {
    if x >= S::ZERO {
        x
    } else {
        slope * x
    }
}

/// Output frequency size for kernel 3, stride 2, one bin of padding per side.
#[inline]
pub(crate) fn conv_out_freq(f_in: usize) -> usize {
    (f_in + 2 - KERNEL_F) / 2 + 1
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache<S> {
    cols: Vec<S>,
    pre: Vec<S>,
    pub(crate) out: Vec<S>,
    f_in: usize,
    f_out: usize,
    c_in: usize,
    c_out: usize,
}

fn im2col<S: Real>(input: &[S], t_len: usize, batch: usize, f_in: usize, c_in: usize) -> (Vec<S>, usize) {
    let f_out = conv_out_freq(f_in);
    let kdim = c_in * KSIZE;
    let mut cols = vec![S::ZERO; t_len * batch * f_out * kdim];
    for t in 0..t_len {
        for b in 0..batch {
            for fo in 0..f_out {
                let row = &mut cols[((t * batch + b) * f_out + fo) * kdim..][..kdim];
                for kt in 0..KERNEL_T {
                    // kt = 0 is the previous frame, kt = 1 the current one
                    if t + kt == 0 {
                        continue;
                    }
                    let ti = t + kt - 1;
                    for kf in 0..KERNEL_F {
                        let fi = 2 * fo + kf;
                        if fi == 0 || fi > f_in {
                            continue;
                        }
                        let src = &input[((ti * batch + b) * f_in + fi - 1) * c_in..][..c_in];
                        for (ci, &v) in src.iter().enumerate() {
                            row[ci * KSIZE + kt * KERNEL_F + kf] = v;
                        }
                    }
                }
            }
        }
    }
    (cols, f_out)
}

fn col2im<S: Real>(dcols: &[S], t_len: usize, batch: usize, f_in: usize, c_in: usize) -> Vec<S> {
    let f_out = conv_out_freq(f_in);
    let kdim = c_in * KSIZE;
    let mut d_in = vec![S::ZERO; t_len * batch * f_in * c_in];
    for t in 0..t_len {
        for b in 0..batch {
            for fo in 0..f_out {
                let row = &dcols[((t * batch + b) * f_out + fo) * kdim..][..kdim];
                for kt in 0..KERNEL_T {
                    if t + kt == 0 {
                        continue;
                    }
                    let ti = t + kt - 1;
                    for kf in 0..KERNEL_F {
                        let fi = 2 * fo + kf;
                        if fi == 0 || fi > f_in {
                            continue;
                        }
                        let dst = &mut d_in[((ti * batch + b) * f_in + fi - 1) * c_in..][..c_in];
                        for (ci, d) in dst.iter_mut().enumerate() {
                            *d += row[ci * KSIZE + kt * KERNEL_F + kf];
                        }
                    }
                }
            }
        }
    }
    d_in
}

fn conv_forward<S: Real>(layer: &ConvLayer<S>, input: &[S], t_len: usize, batch: usize, f_in: usize) -> ConvCache<S> {
    let (c_in, c_out) = (layer.c_in(), layer.c_out());
    let kdim = c_in * KSIZE;
    let (cols, f_out) = im2col(input, t_len, batch, f_in, c_in);
    let rows = t_len * batch * f_out;
    let mut pre = vec![S::ZERO; rows * c_out];
    gemm(
        S::ONE,
        MatRef::row_major(&cols, rows, kdim),
        MatRef::row_major(layer.weight.data(), c_out, kdim).t(),
        S::ZERO,
        MatMut::row_major(&mut pre, rows, c_out),
    );
    let bias = layer.bias.data();
    let slope = layer.slope.data();
    let mut out = vec![S::ZERO; rows * c_out];
    for (r, (p_row, o_row)) in pre.chunks_exact_mut(c_out).zip(out.chunks_exact_mut(c_out)).enumerate() {
        let _ = r;
        for c in 0..c_out {
            p_row[c] += bias[c];
            o_row[c] = prelu(p_row[c], slope[c]);
        }
    }
    ConvCache { cols, pre, out, f_in, f_out, c_in, c_out }
}

fn conv_backward<S: Real>(
    layer: &ConvLayer<S>,
    cache: &ConvCache<S>,
    d_out: &[S],
    t_len: usize,
    batch: usize,
    grads: &mut ConvLayer<S>,
    need_input_grad: bool,
) -> Option<Vec<S>> {
    let (c_in, c_out) = (cache.c_in, cache.c_out);
    let kdim = c_in * KSIZE;
    let rows = t_len * batch * cache.f_out;
    let slope = layer.slope.data();
    let mut dz = vec![S::ZERO; rows * c_out];
    {
        let dslope = grads.slope.data_mut();
        for ((dz_row, d_row), p_row) in dz.chunks_exact_mut(c_out).zip(d_out.chunks_exact(c_out)).zip(cache.pre.chunks_exact(c_out)) {
            for c in 0..c_out {
                let p = p_row[c];
                if p >= S::ZERO {
                    dz_row[c] = d_row[c];
                } else {
                    dz_row[c] = d_row[c] * slope[c];
                    dslope[c] += d_row[c] * p;
                }
            }
        }
    }
    {
        let dbias = grads.bias.data_mut();
        for dz_row in dz.chunks_exact(c_out) {
            for c in 0..c_out {
                dbias[c] += dz_row[c];
            }
        }
    }
    gemm(
        S::ONE,
        MatRef::row_major(&dz, rows, c_out).t(),
        MatRef::row_major(&cache.cols, rows, kdim),
        S::ONE,
        MatMut::row_major(grads.weight.data_mut(), c_out, kdim),
    );
    if !need_input_grad {
        return None;
    }
    let mut dcols = vec![S::ZERO; rows * kdim];
    gemm(
        S::ONE,
        MatRef::row_major(&dz, rows, c_out),
        MatRef::row_major(layer.weight.data(), c_out, kdim),
        S::ZERO,
        MatMut::row_major(&mut dcols, rows, kdim),
    );
    Some(col2im(&dcols, t_len, batch, cache.f_in, c_in))
}

/// Causal convolution of a `[T, c_in, F]` tensor with one layer's weights
/// and bias (no activation). Returns `[T, c_out, F']`.
pub fn conv2d_causal<S: Real>(input: &Tensor<S>, layer: &ConvLayer<S>) -> Result<Tensor<S>, NnError> {
    let shape = input.shape();
    if shape.len() != 3 || shape[1] != layer.c_in() || shape[2] == 0 {
        return Err(shape_err("conv input", &[0, layer.c_in(), 0], shape));
    }
    let (t_len, c_in, f_in) = (shape[0], shape[1], shape[2]);
    let mut channel_last = vec![S::ZERO; input.len()];
    for t in 0..t_len {
        for c in 0..c_in {
            for f in 0..f_in {
                channel_last[(t * f_in + f) * c_in + c] = input.data()[(t * c_in + c) * f_in + f];
            }
        }
    }
    let cache = conv_forward(layer, &channel_last, t_len, 1, f_in);
    let (f_out, c_out) = (cache.f_out, cache.c_out);
    let mut out = vec![S::ZERO; t_len * c_out * f_out];
    for t in 0..t_len {
        for f in 0..f_out {
            for c in 0..c_out {
                out[(t * c_out + c) * f_out + f] = cache.pre[(t * f_out + f) * c_out + c];
            }
        }
    }
    Tensor::from_vec(&[t_len, c_out, f_out], out)
}

#[derive(Debug, Clone)]
pub(crate) struct GruCache<S> {
    /// `T + 1` hidden states, the first one zero.
    h: Vec<S>,
    z: Vec<S>,
    r: Vec<S>,
    n: Vec<S>,
    rh: Vec<S>,
}

fn gru_forward<S: Real>(gru: &GruLayer<S>, x: &[S], t_len: usize, batch: usize) -> GruCache<S> {
    let (hd, inp) = (gru.hidden(), gru.input());
    let tb = t_len * batch;
    let bh = batch * hd;
    let mut xp = vec![S::ZERO; tb * 3 * hd];
    gemm(
        S::ONE,
        MatRef::row_major(x, tb, inp),
        MatRef::row_major(gru.w_ih.data(), 3 * hd, inp).t(),
        S::ZERO,
        MatMut::row_major(&mut xp, tb, 3 * hd),
    );
    let bias = gru.bias.data();
    for row in xp.chunks_exact_mut(3 * hd) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    let w_hh = gru.w_hh.data();
    let w_zr = MatRef::row_major(&w_hh[..2 * hd * hd], 2 * hd, hd).t();
    let w_n = MatRef::row_major(&w_hh[2 * hd * hd..], hd, hd).t();

    let mut h = vec![S::ZERO; (t_len + 1) * bh];
    let mut z = vec![S::ZERO; tb * hd];
    let mut r = vec![S::ZERO; tb * hd];
    let mut n = vec![S::ZERO; tb * hd];
    let mut rh = vec![S::ZERO; tb * hd];
    let mut g_zr = vec![S::ZERO; batch * 2 * hd];
    let mut g_n = vec![S::ZERO; bh];
    for t in 0..t_len {
        let (h_done, h_next) = h.split_at_mut((t + 1) * bh);
        let hp = &h_done[t * bh..];
        let hn = &mut h_next[..bh];
        gemm(S::ONE, MatRef::row_major(hp, batch, hd), w_zr, S::ZERO, MatMut::row_major(&mut g_zr, batch, 2 * hd));
        let off = t * bh;
        for b in 0..batch {
            let xrow = &xp[(t * batch + b) * 3 * hd..][..3 * hd];
            let grow = &g_zr[b * 2 * hd..][..2 * hd];
            for j in 0..hd {
                let k = off + b * hd + j;
                z[k] = (xrow[j] + grow[j]).sigmoid();
                r[k] = (xrow[hd + j] + grow[hd + j]).sigmoid();
                rh[k] = r[k] * hp[b * hd + j];
            }
        }
        gemm(S::ONE, MatRef::row_major(&rh[off..off + bh], batch, hd), w_n, S::ZERO, MatMut::row_major(&mut g_n, batch, hd));
        for b in 0..batch {
            let xrow = &xp[(t * batch + b) * 3 * hd..][..3 * hd];
            for j in 0..hd {
                let k = off + b * hd + j;
                n[k] = (xrow[2 * hd + j] + g_n[b * hd + j]).tanh();
                let hpv = hp[b * hd + j];
                hn[b * hd + j] = (S::ONE - z[k]) * hpv + z[k] * n[k];
            }
        }
    }
    GruCache { h, z, r, n, rh }
}

/// Backpropagation through time. Returns the gradient w.r.t. the input.
fn gru_backward<S: Real>(
    gru: &GruLayer<S>,
    cache: &GruCache<S>,
    x: &[S],
    d_hout: &[S],
    t_len: usize,
    batch: usize,
    grads: &mut GruLayer<S>,
) -> Vec<S> {
    let (hd, inp) = (gru.hidden(), gru.input());
    let tb = t_len * batch;
    let bh = batch * hd;
    let g3 = 3 * hd;
    let w_hh = gru.w_hh.data();
    let mut dxp = vec![S::ZERO; tb * g3];
    let mut dh = vec![S::ZERO; bh];
    let mut dh_next = vec![S::ZERO; bh];
    let mut drh = vec![S::ZERO; bh];
    for t in (0..t_len).rev() {
        let off = t * bh;
        let hp = &cache.h[off..off + bh];
        for (d, &g) in dh.iter_mut().zip(&d_hout[off..off + bh]) {
            *d += g;
        }
        for b in 0..batch {
            let drow = &mut dxp[(t * batch + b) * g3..][..g3];
            for j in 0..hd {
                let i = b * hd + j;
                let k = off + i;
                let (z, n, hpv) = (cache.z[k], cache.n[k], hp[i]);
                let dn = dh[i] * z;
                let dz = dh[i] * (n - hpv);
                drow[2 * hd + j] = dn * (S::ONE - n * n);
                drow[j] = dz * z * (S::ONE - z);
                dh_next[i] = dh[i] * (S::ONE - z);
            }
        }
        gemm(
            S::ONE,
            MatRef::strided(&dxp[t * batch * g3 + 2 * hd..], batch, hd, g3, 1),
            MatRef::row_major(&w_hh[2 * hd * hd..], hd, hd),
            S::ZERO,
            MatMut::row_major(&mut drh, batch, hd),
        );
        for b in 0..batch {
            let drow = &mut dxp[(t * batch + b) * g3..][..g3];
            for j in 0..hd {
                let i = b * hd + j;
                let r = cache.r[off + i];
                let dr = drh[i] * hp[i];
                dh_next[i] += drh[i] * r;
                drow[hd + j] = dr * r * (S::ONE - r);
            }
        }
        gemm(
            S::ONE,
            MatRef::strided(&dxp[t * batch * g3..], batch, 2 * hd, g3, 1),
            MatRef::row_major(&w_hh[..2 * hd * hd], 2 * hd, hd),
            S::ONE,
            MatMut::row_major(&mut dh_next, batch, hd),
        );
        core::mem::swap(&mut dh, &mut dh_next);
    }

    {
        let dw_hh = grads.w_hh.data_mut();
        let (dw_zr, dw_n) = dw_hh.split_at_mut(2 * hd * hd);
        gemm(
            S::ONE,
            MatRef::strided(&dxp, tb, 2 * hd, g3, 1).t(),
            MatRef::row_major(&cache.h[..tb * hd], tb, hd),
            S::ONE,
            MatMut::row_major(dw_zr, 2 * hd, hd),
        );
        gemm(
            S::ONE,
            MatRef::strided(&dxp[2 * hd..], tb, hd, g3, 1).t(),
            MatRef::row_major(&cache.rh, tb, hd),
            S::ONE,
            MatMut::row_major(dw_n, hd, hd),
        );
    }
    gemm(
        S::ONE,
        MatRef::row_major(&dxp, tb, g3).t(),
        MatRef::row_major(x, tb, inp),
        S::ONE,
        MatMut::row_major(grads.w_ih.data_mut(), g3, inp),
    );
    let dbias = grads.bias.data_mut();
    for row in dxp.chunks_exact(g3) {
        for (d, &g) in dbias.iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = vec![S::ZERO; tb * inp];
    gemm(
        S::ONE,
        MatRef::row_major(&dxp, tb, g3),
        MatRef::row_major(gru.w_ih.data(), g3, inp),
        S::ZERO,
        MatMut::row_major(&mut dx, tb, inp),
    );
    dx
}

/// One GRU update for a single stream:
/// `z = s(W_z x + U_z h + b_z)`, `r = s(W_r x + U_r h + b_r)`,
/// `n = tanh(W_n x + U_n (r * h) + b_n)`, `h' = (1 - z) h + z n`.
pub fn gru_step<S: Real>(h_prev: &[S], x: &[S], gru: &GruLayer<S>) -> Vec<S> {
    let hd = gru.hidden();
    let mut xp = vec![S::ZERO; 3 * hd];
    matvec(gru.w_ih.data(), x, Some(gru.bias.data()), &mut xp);
    let w_hh = gru.w_hh.data();
    let mut g_zr = vec![S::ZERO; 2 * hd];
    matvec(&w_hh[..2 * hd * hd], h_prev, None, &mut g_zr);
    let mut z = vec![S::ZERO; hd];
    let mut rh = vec![S::ZERO; hd];
    for j in 0..hd {
        z[j] = (xp[j] + g_zr[j]).sigmoid();
        rh[j] = (xp[hd + j] + g_zr[hd + j]).sigmoid() * h_prev[j];
    }
    let mut g_n = vec![S::ZERO; hd];
    matvec(&w_hh[2 * hd * hd..], &rh, None, &mut g_n);
    (0..hd)
        .map(|j| {
            let n = (xp[2 * hd + j] + g_n[j]).tanh();
            (S::ONE - z[j]) * h_prev[j] + z[j] * n
        })
        .collect()
}

fn dense_forward<S: Real>(d: &Dense<S>, x: &[S], rows: usize) -> Vec<S> {
    let (n_out, n_in) = (d.weight.shape()[0], d.weight.shape()[1]);
    let mut pre = vec![S::ZERO; rows * n_out];
    gemm(
        S::ONE,
        MatRef::row_major(x, rows, n_in),
        MatRef::row_major(d.weight.data(), n_out, n_in).t(),
        S::ZERO,
        MatMut::row_major(&mut pre, rows, n_out),
    );
    for row in pre.chunks_exact_mut(n_out) {
        for (v, &b) in row.iter_mut().zip(d.bias.data()) {
            *v += b;
        }
    }
    pre
}

/// Accumulates parameter gradients and returns the input gradient.
fn dense_backward<S: Real>(d: &Dense<S>, x: &[S], d_pre: &[S], rows: usize, grads: &mut Dense<S>) -> Vec<S> {
    let (n_out, n_in) = (d.weight.shape()[0], d.weight.shape()[1]);
    gemm(
        S::ONE,
        MatRef::row_major(d_pre, rows, n_out).t(),
        MatRef::row_major(x, rows, n_in),
        S::ONE,
        MatMut::row_major(grads.weight.data_mut(), n_out, n_in),
    );
    let db = grads.bias.data_mut();
    for row in d_pre.chunks_exact(n_out) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut dx = vec![S::ZERO; rows * n_in];
    gemm(
        S::ONE,
        MatRef::row_major(d_pre, rows, n_out),
        MatRef::row_major(d.weight.data(), n_out, n_in),
        S::ZERO,
        MatMut::row_major(&mut dx, rows, n_in),
    );
    dx
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    t_len: usize,
    batch: usize,
    input: Vec<S>,
    conv: Vec<ConvCache<S>>,
    gru_in: Vec<S>,
    gru: GruCache<S>,
    fc1_pre: Vec<S>,
    fc1_out: Vec<S>,
    /// Sigmoid outputs, `[T, B, n_out]` time-major.
    out: Vec<S>,
}

impl<S: Real> ForwardCache<S> {
    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Time-major `[T, B, n_out]` outputs.
    pub fn outputs(&self) -> &[S] {
        &self.out
    }

    /// Output of sequence `b` as `[T, n_out]`.
    pub fn sequence_output(&self, b: usize) -> Vec<S> {
        let n_out = self.out.len() / (self.t_len * self.batch);
        let mut v = Vec::with_capacity(self.t_len * n_out);
        for t in 0..self.t_len {
            v.extend_from_slice(&self.out[(t * self.batch + b) * n_out..][..n_out]);
        }
        v
    }

    /// Reshaped conv-stack output of sequence `b`, `[T, 512]`.
    pub fn conv_stack_output(&self, b: usize) -> Vec<S> {
        let w = self.gru_in.len() / (self.t_len * self.batch);
        let mut v = Vec::with_capacity(self.t_len * w);
        for t in 0..self.t_len {
            v.extend_from_slice(&self.gru_in[(t * self.batch + b) * w..][..w]);
        }
        v
    }
}

fn check_features<S>(features: &[&[S]], t_len: usize) -> Result<(), NnError> {
    if features.is_empty() || t_len == 0 {
        return Err(shape_err("feature batch", &[1, 1, N_INPUT], &[features.len(), t_len, N_INPUT]));
    }
    for f in features {
        if f.len() != t_len * N_INPUT {
            return Err(shape_err("feature sequence", &[t_len * N_INPUT], &[f.len()]));
        }
    }
    Ok(())
}

/// Forward pass over `B` equally long feature sequences, each `[T, 64]`
/// row-major.
pub fn forward_batch<S: Real>(model: &CrnModel<S>, features: &[&[S]], t_len: usize) -> Result<ForwardCache<S>, NnError> {
    check_features(features, t_len)?;
    let batch = features.len();
    let tb = t_len * batch;
    let mut input = vec![S::ZERO; tb * N_INPUT];
    for (b, f) in features.iter().enumerate() {
        for t in 0..t_len {
            input[(t * batch + b) * N_INPUT..][..N_INPUT].copy_from_slice(&f[t * N_INPUT..][..N_INPUT]);
        }
    }

    let mut conv = Vec::with_capacity(model.conv.len());
    let mut f_in = N_INPUT;
    for (l, layer) in model.conv.iter().enumerate() {
        let cache = conv_forward(layer, if l == 0 { &input } else { &conv.last().map(|c: &ConvCache<S>| &c.out).unwrap()[..] }, t_len, batch, f_in);
        f_in = cache.f_out;
        conv.push(cache);
    }
    let last = conv.last().expect("at least one conv layer");
    let (f4, c4) = (last.f_out, last.c_out);
    let width = f4 * c4;
    let mut gru_in = vec![S::ZERO; tb * width];
    for row in 0..tb {
        let src = &last.out[row * width..][..width];
        let dst = &mut gru_in[row * width..][..width];
        for f in 0..f4 {
            for c in 0..c4 {
                dst[c * f4 + f] = src[f * c4 + c];
            }
        }
    }

    let gru = gru_forward(&model.gru, &gru_in, t_len, batch);
    let hd = model.gru.hidden();
    let h_out = &gru.h[batch * hd..];
    let fc1_pre = dense_forward(&model.fc1, h_out, tb);
    let slope = model.fc1.slope.as_ref().expect("hidden dense layer has slopes").data();
    let n1 = slope.len();
    let fc1_out: Vec<S> = fc1_pre.iter().enumerate().map(|(i, &v)| prelu(v, slope[i % n1])).collect();
    let out_pre = dense_forward(&model.out, &fc1_out, tb);
    let out = out_pre.iter().map(|v| v.sigmoid()).collect();
    Ok(ForwardCache { t_len, batch, input, conv, gru_in, gru, fc1_pre, fc1_out, out })
}

/// Backward pass given the loss gradient w.r.t. the sigmoid outputs
/// (`[T, B, n_out]`, time-major). Gradients are added into `grads`.
pub fn backward_batch<S: Real>(model: &CrnModel<S>, cache: &ForwardCache<S>, d_out: &[S], grads: &mut CrnModel<S>) -> Result<(), NnError> {
    if d_out.len() != cache.out.len() {
        return Err(shape_err("output gradient", &[cache.out.len()], &[d_out.len()]));
    }
    let (t_len, batch) = (cache.t_len, cache.batch);
    let tb = t_len * batch;
    let d_pre: Vec<S> = d_out.iter().zip(&cache.out).map(|(&d, &y)| d * y * (S::ONE - y)).collect();
    let d_fc1_out = dense_backward(&model.out, &cache.fc1_out, &d_pre, tb, &mut grads.out);

    let slope = model.fc1.slope.as_ref().expect("hidden dense layer has slopes").data();
    let n1 = slope.len();
    let mut d_fc1_pre = vec![S::ZERO; d_fc1_out.len()];
    {
        let dslope = grads.fc1.slope.as_mut().expect("hidden dense layer has slopes").data_mut();
        for (i, (&d, &p)) in d_fc1_out.iter().zip(&cache.fc1_pre).enumerate() {
            if p >= S::ZERO {
                d_fc1_pre[i] = d;
            } else {
                d_fc1_pre[i] = d * slope[i % n1];
                dslope[i % n1] += d * p;
            }
        }
    }
    let hd = model.gru.hidden();
    let h_out = &cache.gru.h[batch * hd..];
    let d_hout = dense_backward(&model.fc1, h_out, &d_fc1_pre, tb, &mut grads.fc1);
    let d_gru_in = gru_backward(&model.gru, &cache.gru, &cache.gru_in, &d_hout, t_len, batch, &mut grads.gru);

    let last = cache.conv.last().expect("at least one conv layer");
    let (f4, c4) = (last.f_out, last.c_out);
    let width = f4 * c4;
    let mut d_act = vec![S::ZERO; tb * width];
    for row in 0..tb {
        let src = &d_gru_in[row * width..][..width];
        let dst = &mut d_act[row * width..][..width];
        for f in 0..f4 {
            for c in 0..c4 {
                dst[f * c4 + c] = src[c * f4 + f];
            }
        }
    }
    for l in (0..model.conv.len()).rev() {
        match conv_backward(&model.conv[l], &cache.conv[l], &d_act, t_len, batch, &mut grads.conv[l], l > 0) {
            Some(d) => d_act = d,
            None => break,
        }
    }
    let _ = &cache.input;
    Ok(())
}

/// Full-sequence forward pass on one `[T, 64]` feature matrix; returns
/// `[T, n_out]` values in `(0, 1)`.
pub fn crn_forward<S: Real>(features: &[S], model: &CrnModel<S>) -> Result<Vec<S>, NnError> {
    if features.is_empty() || !features.len().is_multiple_of(N_INPUT) {
        return Err(shape_err("features", &[0, N_INPUT], &[features.len()]));
    }
    let t_len = features.len() / N_INPUT;
    Ok(forward_batch(model, &[features], t_len)?.sequence_output(0))
}

/// Reshaped conv-stack activations `[T, 512]` for one sequence.
pub fn conv_stack_forward<S: Real>(features: &[S], model: &CrnModel<S>) -> Result<Vec<S>, NnError> {
    if features.is_empty() || !features.len().is_multiple_of(N_INPUT) {
        return Err(shape_err("features", &[0, N_INPUT], &[features.len()]));
    }
    let t_len = features.len() / N_INPUT;
    Ok(forward_batch(model, &[features], t_len)?.conv_stack_output(0))
}

//! Causal convolutional-recurrent network.
//!
//! ```text
//! log-mel [T x 64]
//!   conv  1 -> 16   kernel (2,3) stride (1,2) pad (1,0,1,1)  PReLU   64 -> 32 bins
//!   conv 16 -> 32                                            PReLU   32 -> 16
//!   conv 32 -> 64                                            PReLU   16 ->  8
//!   conv 64 -> 128                                           PReLU    8 ->  4
//!   reshape 128 x 4 -> 512 (index c * 4 + f)
//!   GRU 512 -> 512
//!   dense 512 -> 256 PReLU
//!   dense 256 -> 1|2 sigmoid
//! ```
//!
//! Convolutions see the current and the previous frame only, so the conv
//! stack has a receptive field of five frames and the whole network runs
//! frame by frame without look-ahead ([`StreamState`]).

mod layers;
mod stream;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::math::Real;
use crate::rng;

pub use layers::{
    backward_batch, conv2d_causal, conv_stack_forward, crn_forward, forward_batch, gru_step, prelu, ForwardCache,
};
pub use stream::{crn_step, StreamState};

pub const N_CONV: usize = 4;
pub const CONV_CHANNELS: [usize; N_CONV + 1] = [1, 16, 32, 64, 128];
pub const FREQ_DIMS: [usize; N_CONV + 1] = [64, 32, 16, 8, 4];
pub const KERNEL_T: usize = 2;
pub const KERNEL_F: usize = 3;
pub const N_INPUT: usize = FREQ_DIMS[0];
pub const GRU_INPUT: usize = CONV_CHANNELS[N_CONV] * FREQ_DIMS[N_CONV];
pub const GRU_HIDDEN: usize = 512;
pub const FC_HIDDEN: usize = 256;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch for {what}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { what: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("model must have 1 or 2 outputs, got {0}")]
    BadOutputCount(usize),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
}

fn shape_err(what: &str, expected: &[usize], got: &[usize]) -> NnError {
    NnError::ShapeMismatch { what: what.into(), expected: expected.to_vec(), got: got.to_vec() }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![S::ZERO; shape.iter().product()] }
    }

    pub fn filled(shape: &[usize], v: S) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![v; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err("tensor data", &[n], &[data.len()]));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect() }
    }

    fn uniform(shape: &[usize], bound: f64, rng: &mut rng::Rng) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|_| S::from_f64(rng.random_range(-bound..bound))).collect() }
    }
}

/// What an output unit was trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Speech presence probability.
    Vad,
    /// Voice-to-noise ratio mapped to `[0, 1]`.
    Vnr,
}

impl HeadKind {
    pub fn code(self) -> u32 {
        match self {
            HeadKind::Vad => 0,
            HeadKind::Vnr => 1,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(HeadKind::Vad),
            1 => Some(HeadKind::Vnr),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Vad => "vad",
            HeadKind::Vnr => "vnr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<S> {
    /// `[c_out, c_in, 2, 3]`
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    /// Per-channel PReLU slopes.
    pub slope: Tensor<S>,
}

impl<S: Real> ConvLayer<S> {
    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }
}

/// Gate order in every stacked matrix: update `z`, reset `r`, candidate `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<S> {
    /// `[3H, I]`
    pub w_ih: Tensor<S>,
    /// `[3H, H]`
    pub w_hh: Tensor<S>,
    /// `[3H]`
    pub bias: Tensor<S>,
}

impl<S: Real> GruLayer<S> {
    pub fn hidden(&self) -> usize {
        self.w_hh.shape[1]
    }

    pub fn input(&self) -> usize {
        self.w_ih.shape[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    /// `[out, in]`
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    /// Present for hidden layers.
    pub slope: Option<Tensor<S>>,
}

/// Network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CrnModel<S> {
    pub conv: Vec<ConvLayer<S>>,
    pub gru: GruLayer<S>,
    pub fc1: Dense<S>,
    pub out: Dense<S>,
    heads: Vec<HeadKind>,
}

impl<S: Real> CrnModel<S> {
    /// Fresh model: weights uniform in `+-1/sqrt(fan_in)`, zero biases,
    /// PReLU slopes 0.25.
    pub fn new(heads: &[HeadKind], seed: u64) -> Result<Self, NnError> {
        if heads.is_empty() || heads.len() > 2 {
            return Err(NnError::BadOutputCount(heads.len()));
        }
        let mut rng = rng::rng_for(rng::derive(seed, rng::streams::INIT));
        let mut conv = Vec::with_capacity(N_CONV);
        for l in 0..N_CONV {
            let (ci, co) = (CONV_CHANNELS[l], CONV_CHANNELS[l + 1]);
            let bound = 1.0 / libm::sqrt((ci * KERNEL_T * KERNEL_F) as f64);
            conv.push(ConvLayer {
                weight: Tensor::uniform(&[co, ci, KERNEL_T, KERNEL_F], bound, &mut rng),
                bias: Tensor::zeros(&[co]),
                slope: Tensor::filled(&[co], S::from_f64(PRELU_INIT)),
            });
        }
        let h = GRU_HIDDEN;
        let gru = GruLayer {
            w_ih: Tensor::uniform(&[3 * h, GRU_INPUT], 1.0 / libm::sqrt(GRU_INPUT as f64), &mut rng),
            w_hh: Tensor::uniform(&[3 * h, h], 1.0 / libm::sqrt(h as f64), &mut rng),
            bias: Tensor::zeros(&[3 * h]),
        };
        let fc1 = Dense {
            weight: Tensor::uniform(&[FC_HIDDEN, h], 1.0 / libm::sqrt(h as f64), &mut rng),
            bias: Tensor::zeros(&[FC_HIDDEN]),
            slope: Some(Tensor::filled(&[FC_HIDDEN], S::from_f64(PRELU_INIT))),
        };
        let out = Dense {
            weight: Tensor::uniform(&[heads.len(), FC_HIDDEN], 1.0 / libm::sqrt(FC_HIDDEN as f64), &mut rng),
            bias: Tensor::zeros(&[heads.len()]),
            slope: None,
        };
        Ok(CrnModel { conv, gru, fc1, out, heads: heads.to_vec() })
    }

    /// Same shapes, every parameter zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = S::ZERO);
        }
        z
    }

    pub fn heads(&self) -> &[HeadKind] {
        &self.heads
    }

    pub fn n_out(&self) -> usize {
        self.heads.len()
    }

    /// Output column of the given head, if present.
    pub fn head_index(&self, kind: HeadKind) -> Option<usize> {
        self.heads.iter().position(|&h| h == kind)
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in 0..self.conv.len() {
            names.push(format!("conv{l}.weight"));
            names.push(format!("conv{l}.bias"));
            names.push(format!("conv{l}.prelu"));
        }
        for n in ["gru.w_ih", "gru.w_hh", "gru.bias", "fc1.weight", "fc1.bias", "fc1.prelu", "out.weight", "out.bias"] {
            names.push(n.into());
        }
        names
    }

    /// All parameter tensors in [`Self::tensor_names`] order.
    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut v = Vec::new();
        for c in &self.conv {
            v.extend([&c.weight, &c.bias, &c.slope]);
        }
        v.extend([&self.gru.w_ih, &self.gru.w_hh, &self.gru.bias, &self.fc1.weight, &self.fc1.bias]);
        v.push(self.fc1.slope.as_ref().expect("hidden dense layer has slopes"));
        v.extend([&self.out.weight, &self.out.bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut v = Vec::new();
        for c in &mut self.conv {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
            v.push(&mut c.slope);
        }
        v.push(&mut self.gru.w_ih);
        v.push(&mut self.gru.w_hh);
        v.push(&mut self.gru.bias);
        v.push(&mut self.fc1.weight);
        v.push(&mut self.fc1.bias);
        v.push(self.fc1.slope.as_mut().expect("hidden dense layer has slopes"));
        v.push(&mut self.out.weight);
        v.push(&mut self.out.bias);
        v
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<S>)> {
        self.tensor_names().into_iter().zip(self.tensors()).collect()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Rebuilds a model from named tensors, checking every shape.
    pub fn from_named(heads: &[HeadKind], mut tensors: Vec<(String, Tensor<S>)>) -> Result<Self, NnError> {
        let mut model = CrnModel::new(heads, 0)?;
        let names = model.tensor_names();
        for (name, slot) in names.iter().zip(model.tensors_mut()) {
            let pos = tensors.iter().position(|(n, _)| n == name).ok_or_else(|| NnError::MissingTensor(name.clone()))?;
            let (_, t) = tensors.swap_remove(pos);
            if t.shape != slot.shape {
                return Err(shape_err(name, &slot.shape, &t.shape));
            }
            *slot = t;
        }
        if let Some((name, _)) = tensors.first() {
            return Err(NnError::UnexpectedTensor(name.clone()));
        }
        Ok(model)
    }

    pub fn cast<T: Real>(&self) -> CrnModel<T> {
        let cast_dense = |d: &Dense<S>| Dense { weight: d.weight.cast(), bias: d.bias.cast(), slope: d.slope.as_ref().map(|s| s.cast()) };
        CrnModel {
            conv: self
                .conv
                .iter()
                .map(|c| ConvLayer { weight: c.weight.cast(), bias: c.bias.cast(), slope: c.slope.cast() })
                .collect(),
            gru: GruLayer { w_ih: self.gru.w_ih.cast(), w_hh: self.gru.w_hh.cast(), bias: self.gru.bias.cast() },
            fc1: cast_dense(&self.fc1),
            out: cast_dense(&self.out),
            heads: self.heads.clone(),
        }
    }

    /// Sum of squared parameters, accumulated in `f64`.
    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().map(|t| crate::linalg::norm_sq(t.data())).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_follows_layer_table() {
        let m = CrnModel::<f32>::new(&[HeadKind::Vad], 1).unwrap();
        let conv: usize = (0..N_CONV).map(|l| CONV_CHANNELS[l + 1] * (CONV_CHANNELS[l] * 6 + 2)).sum();
        let gru = 2 * 1536 * 512 + 1536;
        let fc = 256 * 512 + 2 * 256;
        assert_eq!(m.parameter_count(), conv + gru + fc + 256 + 1);
        assert_eq!(m.parameter_count(), 1_771_329);
        let m2 = CrnModel::<f32>::new(&[HeadKind::Vad, HeadKind::Vnr], 1).unwrap();
        assert_eq!(m2.parameter_count(), 1_771_329 + 257);
    }

    #[test]
    fn init_bounds_and_determinism() {
        let a = CrnModel::<f32>::new(&[HeadKind::Vnr], 5).unwrap();
        assert_eq!(a, CrnModel::<f32>::new(&[HeadKind::Vnr], 5).unwrap());
        assert_ne!(a, CrnModel::<f32>::new(&[HeadKind::Vnr], 6).unwrap());
        let bound = 1.0 / (6.0f32).sqrt();
        assert!(a.conv[0].weight.data().iter().all(|w| w.abs() <= bound));
        assert!(a.conv[0].bias.data().iter().all(|&b| b == 0.0));
        assert!(a.fc1.slope.as_ref().unwrap().data().iter().all(|&s| s == 0.25));
    }

    #[test]
    fn output_count_is_checked() {
        assert_eq!(CrnModel::<f32>::new(&[], 0), Err(NnError::BadOutputCount(0)));
        assert_eq!(CrnModel::<f32>::new(&[HeadKind::Vad; 3], 0), Err(NnError::BadOutputCount(3)));
    }

    #[test]
    fn from_named_round_trip_and_errors() {
        let m = CrnModel::<f32>::new(&[HeadKind::Vad, HeadKind::Vnr], 3).unwrap();
        let named: Vec<(String, Tensor<f32>)> = m.named_tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
        assert_eq!(CrnModel::from_named(m.heads(), named.clone()).unwrap(), m);

        let mut missing = named.clone();
        missing.pop();
        assert!(matches!(CrnModel::from_named(m.heads(), missing), Err(NnError::MissingTensor(_))));

        let mut wrong = named;
        wrong[0].1 = Tensor::zeros(&[1]);
        assert!(matches!(CrnModel::from_named(m.heads(), wrong), Err(NnError::ShapeMismatch { .. })));
    }
}

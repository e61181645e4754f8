#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vadkit_core::nn::{CrnModel, HeadKind};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Log-mel-like random features, `[t, 64]`.
pub fn features(t: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..t * 64).map(|_| r.random_range(-4.0..1.0)).collect()
}

/// Model with random biases and slopes so no pre-activation sits on a kink.
pub fn random_model(heads: &[HeadKind], seed: u64) -> CrnModel<f64> {
    let mut m = CrnModel::<f64>::new(heads, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let names = m.tensor_names();
    for (name, t) in names.iter().zip(m.tensors_mut()) {
        if name.ends_with("bias") {
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.1..0.1));
        } else if name.ends_with("prelu") {
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(0.05..0.5));
        }
    }
    m
}

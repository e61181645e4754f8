//! Seed splitting.
//!
//! Every random stream in the toolkit is addressed by a root seed and a
//! path of stream ids. A child seed is `splitmix64(parent ^ splitmix64(id))`,
//! and the generator for a seed is ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`. Changing one consumer therefore never
//! shifts the random numbers seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of child stream `id` under `seed`.
#[inline]
pub fn derive(seed: u64, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(id))
}

/// Seed reached by following `path` from `seed`.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &id| derive(s, id))
}

pub fn rng_for(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named stream ids so call sites stay readable.
pub mod streams {
    pub const MIX_SPEC: u64 = 1;
    pub const SPEECH: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const AIR: u64 = 4;
    pub const SHIFT: u64 = 5;
    pub const INIT: u64 = 10;
    pub const SHUFFLE: u64 = 11;
    pub const CROP: u64 = 12;
}

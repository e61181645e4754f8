//! Core algorithms for noise-robust voice activity detection.
//!
//! Everything in this crate is pure computation on in-memory buffers:
//! framing and mel weighting ([`dsp`]), the clean-level VAD and segmental
//! voice-to-noise ratio training targets ([`labels`]), a synthetic corpus
//! generator ([`synth`]), the causal convolutional-recurrent network
//! ([`nn`]), its losses, gradients and optimizer ([`train`]) and the
//! evaluation protocol ([`eval`]).
//!
//! The crate builds without `std` (it needs `alloc`). The default `std`
//! feature only turns on runtime CPU feature detection in the matrix
//! multiplication backend.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audio;
pub mod dsp;
pub mod eval;
pub mod labels;
pub mod linalg;
pub mod math;
pub mod nn;
pub mod rng;
pub mod stream;
pub mod synth;
pub mod train;

pub use audio::{AudioClip, AudioError, SAMPLE_RATE};
pub use nn::{CrnModel, HeadKind, StreamState};

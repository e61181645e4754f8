//! File formats, dataset tooling and inference drivers around `vadkit-core`.

pub mod atomic;
pub mod config;
pub mod dataset;
pub mod formats;
pub mod infer;
pub mod modelfile;
pub mod sources;
pub mod wav;

pub use config::{ConfigError, RunConfig};
pub use modelfile::{load_model, save_model, ModelFileError};
pub use wav::{read_wav, write_wav, WavError};

//! Binary container for model weights and optimizer state.
//!
//! Layout, little-endian: magic `CRNV`, format version `u32`, `n_out` `u32`,
//! tensor count `u32`, then per tensor a `u16` name length, the UTF-8 name,
//! a `u8` rank, `rank` dims as `u32` and the `f32` data; finally the CRC32
//! of every preceding byte.

use std::io;
use std::path::Path;

use vadkit_core::nn::{NnError, Tensor};
use vadkit_core::train::AdamState;
use vadkit_core::{CrnModel, HeadKind};

use crate::atomic;

pub const MAGIC: [u8; 4] = *b"CRNV";
pub const FORMAT_VERSION: u32 = 1;
/// Output head kinds, one code per output column.
pub const HEADS_TENSOR: &str = "meta.heads";
/// Optimizer step counter split into four 16-bit limbs (exact in `f32`).
pub const STEP_TENSOR: &str = "meta.step";

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("file is truncated")]
    Truncated,
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Decoded file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub n_out: u32,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

pub fn encode(c: &Container) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&c.n_out.to_le_bytes());
    out.extend_from_slice(&(c.tensors.len() as u32).to_le_bytes());
    for (name, t) in &c.tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(ModelFileError::Truncated)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelFileError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Container, ModelFileError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < 20 {
        return Err(ModelFileError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::ChecksumMismatch { stored, computed });
    }
    let mut cur = Cursor { buf: body, pos: 4 };
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let n_out = cur.u32()?;
    let count = cur.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?).map_err(|_| ModelFileError::Malformed("tensor name is not UTF-8".into()))?.to_owned();
        let rank = cur.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(ModelFileError::Truncated)?;
        let raw = cur.take(n.checked_mul(4).ok_or(ModelFileError::Truncated)?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        tensors.push((name, Tensor::from_vec(&shape, data)?));
    }
    if cur.pos != body.len() {
        return Err(ModelFileError::Malformed(format!("{} trailing bytes", body.len() - cur.pos)));
    }
    Ok(Container { n_out, tensors })
}

fn heads_tensor(heads: &[HeadKind]) -> Tensor<f32> {
    Tensor::from_vec(&[heads.len()], heads.iter().map(|h| h.code() as f32).collect()).expect("shape matches")
}

fn take_tensor(tensors: &mut Vec<(String, Tensor<f32>)>, name: &str) -> Result<Tensor<f32>, ModelFileError> {
    let pos = tensors.iter().position(|(n, _)| n == name).ok_or_else(|| ModelFileError::Malformed(format!("missing tensor {name}")))?;
    Ok(tensors.remove(pos).1)
}

fn parse_heads(t: &Tensor<f32>, n_out: u32) -> Result<Vec<HeadKind>, ModelFileError> {
    let heads = t
        .data()
        .iter()
        .map(|&c| HeadKind::from_code(c as u32).filter(|_| c.fract() == 0.0 && c >= 0.0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| ModelFileError::Malformed("unknown head kind".into()))?;
    if heads.len() != n_out as usize {
        return Err(ModelFileError::Malformed(format!("header says {n_out} outputs, head list has {}", heads.len())));
    }
    Ok(heads)
}

pub fn model_to_bytes(model: &CrnModel<f32>) -> Vec<u8> {
    let mut tensors = vec![(HEADS_TENSOR.to_owned(), heads_tensor(model.heads()))];
    tensors.extend(model.named_tensors().into_iter().map(|(n, t)| (n, t.clone())));
    encode(&Container { n_out: model.n_out() as u32, tensors })
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<CrnModel<f32>, ModelFileError> {
    let Container { n_out, mut tensors } = decode(bytes)?;
    let heads = parse_heads(&take_tensor(&mut tensors, HEADS_TENSOR)?, n_out)?;
    Ok(CrnModel::from_named(&heads, tensors)?)
}

pub fn save_model(model: &CrnModel<f32>, path: &Path) -> Result<(), ModelFileError> {
    Ok(atomic::write_bytes(path, &model_to_bytes(model))?)
}

pub fn load_model(path: &Path) -> Result<CrnModel<f32>, ModelFileError> {
    model_from_bytes(&std::fs::read(path)?)
}

fn step_tensor(step: u64) -> Tensor<f32> {
    Tensor::from_vec(&[4], (0..4).map(|i| ((step >> (16 * i)) & 0xffff) as f32).collect()).expect("shape matches")
}

fn parse_step(t: &Tensor<f32>) -> Result<u64, ModelFileError> {
    if t.shape() != [4] || t.data().iter().any(|&v| !(0.0..65536.0).contains(&v) || v.fract() != 0.0) {
        return Err(ModelFileError::Malformed("bad step counter".into()));
    }
    Ok(t.data().iter().enumerate().map(|(i, &v)| (v as u64) << (16 * i)).sum())
}

/// Optimizer sidecar: moments as `m.<tensor>` / `v.<tensor>` plus the step.
pub fn optimizer_to_bytes(state: &AdamState<f32>) -> Vec<u8> {
    let mut tensors = vec![(HEADS_TENSOR.to_owned(), heads_tensor(state.m.heads())), (STEP_TENSOR.to_owned(), step_tensor(state.step))];
    for (prefix, moments) in [("m", &state.m), ("v", &state.v)] {
        tensors.extend(moments.named_tensors().into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t.clone())));
    }
    encode(&Container { n_out: state.m.n_out() as u32, tensors })
}

pub fn optimizer_from_bytes(bytes: &[u8]) -> Result<AdamState<f32>, ModelFileError> {
    let Container { n_out, mut tensors } = decode(bytes)?;
    let heads = parse_heads(&take_tensor(&mut tensors, HEADS_TENSOR)?, n_out)?;
    let step = parse_step(&take_tensor(&mut tensors, STEP_TENSOR)?)?;
    let (m, v): (Vec<_>, Vec<_>) = tensors.into_iter().partition(|(n, _)| n.starts_with("m."));
    let strip = |list: Vec<(String, Tensor<f32>)>, prefix: &str| -> Result<Vec<_>, ModelFileError> {
        list.into_iter()
            .map(|(n, t)| match n.strip_prefix(prefix) {
                Some(rest) => Ok((rest.to_owned(), t)),
                None => Err(ModelFileError::Malformed(format!("unexpected tensor {n}"))),
            })
            .collect()
    };
    let m = CrnModel::from_named(&heads, strip(m, "m.")?)?;
    let v = CrnModel::from_named(&heads, strip(v, "v.")?)?;
    Ok(AdamState { m, v, step })
}

pub fn save_optimizer(state: &AdamState<f32>, path: &Path) -> Result<(), ModelFileError> {
    Ok(atomic::write_bytes(path, &optimizer_to_bytes(state))?)
}

pub fn load_optimizer(path: &Path) -> Result<AdamState<f32>, ModelFileError> {
    optimizer_from_bytes(&std::fs::read(path)?)
}

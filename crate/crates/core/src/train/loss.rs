//! Frame losses and their gradients.

use alloc::vec::Vec;

use super::TrainError;
use crate::nn::HeadKind;

/// Predictions are clamped to `[PRED_CLAMP, 1 - PRED_CLAMP]` inside BCE.
pub const PRED_CLAMP: f64 = 1e-7;
pub const DEFAULT_ALPHA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// BCE on the VAD label, one output.
    VadBce,
    /// MAE on the unit-mapped VNR label, one output.
    VnrMae,
    /// `(1 - alpha) BCE(vad) + alpha MAE(vnr)`, two outputs.
    MultiBceMae,
    /// `BCE(vad) + BCE(vnr)`, two outputs.
    MultiBceBce,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::VadBce, LossKind::VnrMae, LossKind::MultiBceMae, LossKind::MultiBceBce];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::VadBce => "vad_bce",
            LossKind::VnrMae => "vnr_mae",
            LossKind::MultiBceMae => "multi_bce_mae",
            LossKind::MultiBceBce => "multi_bce_bce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        LossKind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Output heads a model trained with this loss carries, in order.
    pub fn heads(self) -> &'static [HeadKind] {
        match self {
            LossKind::VadBce => &[HeadKind::Vad],
            LossKind::VnrMae => &[HeadKind::Vnr],
            LossKind::MultiBceMae | LossKind::MultiBceBce => &[HeadKind::Vad, HeadKind::Vnr],
        }
    }
}

fn check_len(pred: usize, target: usize) -> Result<(), TrainError> {
    if pred != target {
        return Err(TrainError::LengthMismatch { pred, target });
    }
    Ok(())
}

#[inline]
fn clamp_pred(p: f64) -> f64 {
    p.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP)
}

/// Per-frame cross-entropy and its derivative w.r.t. the unclamped
/// prediction (zero where the clamp is active).
#[inline]
pub(crate) fn bce_term(p: f64, z: f64) -> (f64, f64) {
    let q = clamp_pred(p);
    let loss = -(z * libm::log(q) + (1.0 - z) * libm::log(1.0 - q));
    let grad = if p == q { -(z / q) + (1.0 - z) / (1.0 - q) } else { 0.0 };
    (loss, grad)
}

#[inline]
pub(crate) fn mae_term(p: f64, z: f64) -> (f64, f64) {
    let d = p - z;
    let grad = if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    };
    (d.abs(), grad)
}

/// Mean binary cross-entropy.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(target).map(|(&p, &z)| bce_term(p, z).0).sum::<f64>() / pred.len() as f64)
}

/// Mean absolute error.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<f64, TrainError> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(target).map(|(&p, &z)| mae_term(p, z).0).sum::<f64>() / pred.len() as f64)
}

/// Two-output losses. Single-output kinds are rejected.
pub fn multi_loss(
    pred_vad: &[f64],
    pred_vnr: &[f64],
    tgt_vad: &[f64],
    tgt_vnr: &[f64],
    kind: LossKind,
    alpha: f64,
) -> Result<f64, TrainError> {
    match kind {
        LossKind::MultiBceMae => Ok((1.0 - alpha) * bce_loss(pred_vad, tgt_vad)? + alpha * mae_loss(pred_vnr, tgt_vnr)?),
        LossKind::MultiBceBce => Ok(bce_loss(pred_vad, tgt_vad)? + bce_loss(pred_vnr, tgt_vnr)?),
        _ => Err(TrainError::WrongOutputArity { expected: 2, got: kind.heads().len() }),
    }
}

/// Loss of one frame given its `n_out` outputs, and the derivative w.r.t.
/// each output.
pub(crate) fn frame_loss(kind: LossKind, alpha: f64, out: &[f64], vad: f64, vnr: f64, grad: &mut [f64]) -> f64 {
    match kind {
        LossKind::VadBce => {
            let (l, g) = bce_term(out[0], vad);
            grad[0] = g;
            l
        }
        LossKind::VnrMae => {
            let (l, g) = mae_term(out[0], vnr);
            grad[0] = g;
            l
        }
        LossKind::MultiBceMae => {
            let (l0, g0) = bce_term(out[0], vad);
            let (l1, g1) = mae_term(out[1], vnr);
            grad[0] = (1.0 - alpha) * g0;
            grad[1] = alpha * g1;
            (1.0 - alpha) * l0 + alpha * l1
        }
        LossKind::MultiBceBce => {
            let (l0, g0) = bce_term(out[0], vad);
            let (l1, g1) = bce_term(out[1], vnr);
            grad[0] = g0;
            grad[1] = g1;
            l0 + l1
        }
    }
}

/// Per-frame loss contributions of a whole sequence (for inspection).
pub fn frame_losses(kind: LossKind, alpha: f64, outputs: &[f64], vad: &[f64], vnr: &[f64]) -> Vec<f64> {
    let n_out = kind.heads().len();
    let mut g = [0.0; 2];
    outputs.chunks_exact(n_out).zip(vad.iter().zip(vnr)).map(|(o, (&a, &b))| frame_loss(kind, alpha, o, a, b, &mut g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_closed_forms() {
        assert!((bce_loss(&[0.5], &[1.0]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        let l = bce_loss(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((l + libm::log(1.0 - 1e-7)).abs() < 1e-18);
        assert!(l < 1.1e-7);
        assert!(matches!(bce_loss(&[0.5], &[]), Err(TrainError::LengthMismatch { .. })));
    }

    #[test]
    fn mae_examples() {
        let a = [0.1, 0.5, 0.9];
        let b: Vec<f64> = a.iter().map(|x| x + 0.1).collect();
        assert_eq!(mae_loss(&a, &a).unwrap(), 0.0);
        assert!((mae_loss(&b, &a).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(mae_loss(&a, &b).unwrap(), mae_loss(&b, &a).unwrap());
    }

    #[test]
    fn multi_degenerate_weights() {
        let (pv, pn, tv, tn) = ([0.3, 0.8], [0.6, 0.2], [0.0, 1.0], [0.5, 0.1]);
        let bce = bce_loss(&pv, &tv).unwrap();
        let mae = mae_loss(&pn, &tn).unwrap();
        assert_eq!(multi_loss(&pv, &pn, &tv, &tn, LossKind::MultiBceMae, 0.0).unwrap(), bce);
        assert_eq!(multi_loss(&pv, &pn, &tv, &tn, LossKind::MultiBceMae, 1.0).unwrap(), mae);
        assert_eq!(multi_loss(&pv, &pn, &tv, &tn, LossKind::MultiBceMae, 0.2).unwrap(), 0.8 * bce + 0.2 * mae);
        assert!(multi_loss(&[1.0], &[0.0], &[1.0], &[0.0], LossKind::MultiBceBce, 0.2).unwrap() < 1e-6);
        assert_eq!(
            multi_loss(&pv, &pn, &tv, &tn, LossKind::VadBce, 0.2),
            Err(TrainError::WrongOutputArity { expected: 2, got: 1 })
        );
    }

    #[test]
    fn names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(LossKind::parse(k.name()), Some(k));
        }
        assert_eq!(LossKind::parse("bce"), None);
    }
}

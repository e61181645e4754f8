//! Post-processing, ROC/AUC, equal error rate and SNR-stratified reports.

use alloc::vec;
use alloc::vec::Vec;

use crate::labels::vnr_unit_to_db;
use crate::math;

pub const POSTPROCESS_WINDOW_S: f64 = 0.4;
pub const POSTPROCESS_PERCENTILE: f64 = 90.0;
/// Default SNR bin edges in dB. Clips outside the range land in open-ended
/// under- and overflow bins.
pub const DEFAULT_SNR_EDGES: [f64; 7] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {0} is not finite")]
    NonFiniteScore(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// `ceil(p/100 * n)`-th smallest element of an ascending slice (rank
/// clamped to `1..=n`). Panics on an empty slice.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty set");
    let n = sorted.len();
    let rank = math::ceil(percentile / 100.0 * n as f64) as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Number of frames in a window, rounded to the nearest frame and at least 1.
pub fn window_frames(window_s: f64, hop_s: f64) -> usize {
    (math::round(window_s / hop_s) as usize).max(1)
}

/// Trailing percentile filter: `out[t]` is the nearest-rank percentile of
/// `pred[t + 1 - window ..= t]`, with the window shortened at the start.
pub fn postprocess(pred: &[f64], window: usize, percentile: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(pred.len());
    let mut buf = TrailingPercentile::new(window, percentile);
    for &p in pred {
        out.push(buf.push(p));
    }
    out
}

/// Streaming form of [`postprocess`].
#[derive(Debug, Clone)]
pub struct TrailingPercentile {
    window: usize,
    percentile: f64,
    history: Vec<f64>,
    next: usize,
    sorted: Vec<f64>,
}

impl TrailingPercentile {
    pub fn new(window: usize, percentile: f64) -> Self {
        let window = window.max(1);
        TrailingPercentile { window, percentile, history: Vec::with_capacity(window), next: 0, sorted: Vec::with_capacity(window) }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.history.len() < self.window {
            self.history.push(x);
        } else {
            self.history[self.next] = x;
            self.next = (self.next + 1) % self.window;
        }
        self.sorted.clear();
        self.sorted.extend_from_slice(&self.history);
        self.sorted.sort_by(f64::total_cmp);
        nearest_rank(&self.sorted, self.percentile)
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.next = 0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// ROC over all distinct thresholds; equal scores form a single step.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let idx = descending(scores);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("starts at origin");
        let p = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (p.0 - x0) * (p.1 + y0) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Operating point where false-alarm and miss rates are closest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    /// Mean of the two rates at the chosen threshold.
    pub rate: f64,
    /// Decisions are positive for `score >= threshold`; may be `+inf`.
    pub threshold: f64,
}

pub fn eer(scores: &[f64], labels: &[bool]) -> Result<Eer, EvalError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let idx = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    // threshold +inf: nothing is positive
    let mut best = Eer { rate: 0.5, threshold: f64::INFINITY };
    let mut best_gap = 1.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let fpr = fp as f64 / neg as f64;
        let fnr = 1.0 - tp as f64 / pos as f64;
        let gap = (fpr - fnr).abs();
        if gap < best_gap {
            best_gap = gap;
            best = Eer { rate: (fpr + fnr) / 2.0, threshold: s };
        }
    }
    Ok(best)
}

/// Scores and reference labels of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipScores {
    pub snr_db: f64,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrRow {
    /// `-inf` for the underflow bin.
    pub bin_lo: f64,
    /// `+inf` for the overflow bin.
    pub bin_hi: f64,
    pub mean_auc: f64,
    /// Population standard deviation.
    pub std_auc: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrReport {
    /// Non-empty bins in ascending order.
    pub rows: Vec<SnrRow>,
    /// Clips without both classes.
    pub excluded: usize,
}

/// Bin index of `x` for ascending `edges`: 0 is the underflow bin, and bin
/// `i` covers `[edges[i-1], edges[i])`.
fn bin_of(x: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|&&e| x >= e).count()
}

/// Per-clip AUC grouped into SNR bins.
pub fn auc_by_snr(clips: &[ClipScores], edges: &[f64]) -> Result<SnrReport, EvalError> {
    if edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| !e.is_finite()) {
        return Err(EvalError::InvalidConfig("SNR bin edges must be finite and strictly increasing"));
    }
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); edges.len() + 1];
    let mut excluded = 0;
    for c in clips {
        match roc_auc(&c.scores, &c.labels) {
            Ok(r) => bins[bin_of(c.snr_db, edges)].push(r.auc),
            Err(EvalError::SingleClass) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    let rows = bins
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(i, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            SnrRow {
                bin_lo: if i == 0 { f64::NEG_INFINITY } else { edges[i - 1] },
                bin_hi: if i == edges.len() { f64::INFINITY } else { edges[i] },
                mean_auc: mean,
                std_auc: math::sqrt(var),
                count: v.len(),
            }
        })
        .collect();
    Ok(SnrReport { rows, excluded })
}

/// Mean per-clip AUC over clips whose SNR lies in `[lo, hi)`, skipping
/// single-class clips. `None` if no clip qualifies.
pub fn mean_clip_auc(clips: &[ClipScores], lo: f64, hi: f64) -> Result<Option<f64>, EvalError> {
    let mut aucs = Vec::new();
    for c in clips.iter().filter(|c| c.snr_db >= lo && c.snr_db < hi) {
        match roc_auc(&c.scores, &c.labels) {
            Ok(r) => aucs.push(r.auc),
            Err(EvalError::SingleClass) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(if aucs.is_empty() { None } else { Some(aucs.iter().sum::<f64>() / aucs.len() as f64) })
}

/// Which unit a score column is in, for reporting thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreUnit {
    Probability,
    /// Unit-mapped VNR; thresholds are reported in dB.
    VnrUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// AUC over all frames of all clips pooled.
    pub overall_auc: f64,
    pub eer: f64,
    /// In dB for VNR scores, raw otherwise.
    pub eer_threshold: f64,
    pub by_snr: SnrReport,
}

pub fn evaluate(clips: &[ClipScores], edges: &[f64], unit: ScoreUnit) -> Result<EvalReport, EvalError> {
    let scores: Vec<f64> = clips.iter().flat_map(|c| c.scores.iter().copied()).collect();
    let labels: Vec<bool> = clips.iter().flat_map(|c| c.labels.iter().copied()).collect();
    for c in clips {
        if c.scores.len() != c.labels.len() {
            return Err(EvalError::LengthMismatch { scores: c.scores.len(), labels: c.labels.len() });
        }
    }
    let roc = roc_auc(&scores, &labels)?;
    let e = eer(&scores, &labels)?;
    let eer_threshold = match unit {
        ScoreUnit::Probability => e.threshold,
        ScoreUnit::VnrUnit => vnr_unit_to_db(e.threshold),
    };
    Ok(EvalReport { overall_auc: roc.auc, eer: e.rate, eer_threshold, by_snr: auc_by_snr(clips, edges)? })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time_s: f64,
    /// Peak absolute sample within the frame.
    pub waveform_env: f64,
    pub vad: Option<f64>,
    pub vnr_db: Option<f64>,
}

/// One row per frame; frame `n` starts at sample `n * hop`.
pub fn trace_rows(
    mixture: &[f32],
    sample_rate: u32,
    frame_len: usize,
    hop: usize,
    vad: Option<&[f64]>,
    vnr_unit: Option<&[f64]>,
) -> Result<Vec<TraceRow>, EvalError> {
    let n = vad.or(vnr_unit).map(|v| v.len()).ok_or(EvalError::InvalidConfig("trace needs at least one output"))?;
    if let (Some(a), Some(b)) = (vad, vnr_unit) {
        if a.len() != b.len() {
            return Err(EvalError::LengthMismatch { scores: a.len(), labels: b.len() });
        }
    }
    Ok((0..n)
        .map(|i| {
            let start = (i * hop).min(mixture.len());
            let end = (i * hop + frame_len).min(mixture.len());
            TraceRow {
                time_s: (i * hop) as f64 / sample_rate as f64,
                waveform_env: mixture[start..end].iter().fold(0.0f64, |m, &s| m.max((s as f64).abs())),
                vad: vad.map(|v| v[i]),
                vnr_db: vnr_unit.map(|v| vnr_unit_to_db(v[i])),
            }
        })
        .collect())
}

//! CSV files: features, labels, manifests, training logs, reports,
//! traces and predictions.

use std::io;
use std::path::{Path, PathBuf};

use vadkit_core::dsp::MelFeatures;
use vadkit_core::eval::{EvalReport, SnrRow, TraceRow};
use vadkit_core::labels::LabelTrack;
use vadkit_core::train::{EpochRecord, StepRecord};

use crate::atomic;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header { path: PathBuf, expected: String, found: String },
    #[error("{path}, line {line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const LABEL_HEADER: [&str; 4] = ["frame", "vad", "vnr_db", "vnr_unit"];
pub const MANIFEST_HEADER: [&str; 8] = ["index", "seed", "snr_db", "level_dbfs", "reverb", "rt60", "mix_path", "label_path"];
pub const TRAIN_LOG_HEADER: [&str; 6] = ["epoch", "step", "loss", "grad_norm", "clip_threshold", "val_auc"];
pub const OVERALL_HEADER: [&str; 3] = ["auc", "eer", "eer_threshold_db"];
pub const BY_SNR_HEADER: [&str; 5] = ["bin_lo", "bin_hi", "mean_auc", "std_auc", "count"];
pub const TRACE_HEADER: [&str; 4] = ["time_s", "waveform_env", "vad", "vnr_db"];

/// Writes a CSV atomically.
pub fn write_csv<F>(path: &Path, header: &[&str], rows: F) -> io::Result<()>
where
    F: FnOnce(&mut csv::Writer<&mut std::fs::File>) -> csv::Result<()>,
{
    atomic::write_with(path, |file| {
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header).map_err(io::Error::other)?;
        rows(&mut w).map_err(io::Error::other)?;
        w.flush()
    })
}

fn open_checked(path: &Path, header: &[&str]) -> Result<csv::Reader<std::fs::File>, FormatError> {
    let mut r = csv::Reader::from_path(path)?;
    let found = r.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(FormatError::Header { path: path.into(), expected: header.join(","), found: found.iter().collect::<Vec<_>>().join(",") });
    }
    Ok(r)
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, FormatError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| FormatError::Parse { path: path.into(), line, msg: format!("missing column {name}") })?;
    raw.trim().parse().map_err(|_| FormatError::Parse { path: path.into(), line, msg: format!("cannot parse {name} from `{raw}`") })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per frame, 64 columns, 9 significant digits.
pub fn write_features(path: &Path, feats: &MelFeatures) -> io::Result<()> {
    let header: Vec<String> = (0..feats.n_bands()).map(|b| format!("mel{b}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, |w| {
        for n in 0..feats.n_frames() {
            w.write_record(feats.frame(n).iter().map(|v| format!("{v:.8e}")))?;
        }
        Ok(())
    })
}

pub fn write_labels(path: &Path, labels: &LabelTrack) -> io::Result<()> {
    write_csv(path, &LABEL_HEADER, |w| {
        for i in 0..labels.len() {
            w.write_record([i.to_string(), labels.vad[i].to_string(), labels.vnr_db[i].to_string(), labels.vnr_unit[i].to_string()])?;
        }
        Ok(())
    })
}

pub fn read_labels(path: &Path, frame_hop_s: f64) -> Result<LabelTrack, FormatError> {
    let mut r = open_checked(path, &LABEL_HEADER)?;
    let mut t = LabelTrack { vad: Vec::new(), vnr_db: Vec::new(), vnr_unit: Vec::new(), frame_hop_s };
    for rec in r.records() {
        let rec = rec?;
        let frame: usize = field(path, &rec, 0, "frame")?;
        if frame != t.vad.len() {
            let line = rec.position().map_or(0, |p| p.line());
            return Err(FormatError::Parse { path: path.into(), line, msg: format!("frame {frame} out of order") });
        }
        t.vad.push(field(path, &rec, 1, "vad")?);
        t.vnr_db.push(field(path, &rec, 2, "vnr_db")?);
        t.vnr_unit.push(field(path, &rec, 3, "vnr_unit")?);
    }
    Ok(t)
}

/// One generated example. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub index: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub level_dbfs: f64,
    pub reverb: bool,
    pub rt60: f64,
    pub mix_path: String,
    pub label_path: String,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> io::Result<()> {
    write_csv(path, &MANIFEST_HEADER, |w| {
        for r in rows {
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                r.snr_db.to_string(),
                r.level_dbfs.to_string(),
                (r.reverb as u8).to_string(),
                r.rt60.to_string(),
                r.mix_path.clone(),
                r.label_path.clone(),
            ])?;
        }
        Ok(())
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, FormatError> {
    let mut r = open_checked(path, &MANIFEST_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let reverb: u8 = field(path, &rec, 4, "reverb")?;
        rows.push(ManifestRow {
            index: field(path, &rec, 0, "index")?,
            seed: field(path, &rec, 1, "seed")?,
            snr_db: field(path, &rec, 2, "snr_db")?,
            level_dbfs: field(path, &rec, 3, "level_dbfs")?,
            reverb: reverb != 0,
            rt60: field(path, &rec, 5, "rt60")?,
            mix_path: field(path, &rec, 6, "mix_path")?,
            label_path: field(path, &rec, 7, "label_path")?,
        });
    }
    Ok(rows)
}

/// Step rows; the last step of each epoch also carries the validation AUC.
pub fn write_train_log(path: &Path, steps: &[StepRecord], epochs: &[EpochRecord]) -> io::Result<()> {
    write_csv(path, &TRAIN_LOG_HEADER, |w| {
        for (i, s) in steps.iter().enumerate() {
            let last_of_epoch = steps.get(i + 1).is_none_or(|n| n.epoch != s.epoch);
            let auc = if last_of_epoch { epochs.iter().find(|e| e.epoch == s.epoch).map(|e| e.val_auc) } else { None };
            w.write_record([
                s.epoch.to_string(),
                s.step.to_string(),
                s.loss.to_string(),
                s.grad_norm.to_string(),
                s.clip_threshold.to_string(),
                opt(auc),
            ])?;
        }
        Ok(())
    })
}

pub fn write_overall(path: &Path, report: &EvalReport) -> io::Result<()> {
    write_csv(path, &OVERALL_HEADER, |w| {
        w.write_record([report.overall_auc.to_string(), report.eer.to_string(), report.eer_threshold.to_string()])
    })
}

pub fn write_by_snr(path: &Path, rows: &[SnrRow]) -> io::Result<()> {
    write_csv(path, &BY_SNR_HEADER, |w| {
        for r in rows {
            w.write_record([r.bin_lo.to_string(), r.bin_hi.to_string(), r.mean_auc.to_string(), r.std_auc.to_string(), r.count.to_string()])?;
        }
        Ok(())
    })
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> io::Result<()> {
    write_csv(path, &TRACE_HEADER, |w| {
        for r in rows {
            w.write_record([r.time_s.to_string(), r.waveform_env.to_string(), opt(r.vad), opt(r.vnr_db)])?;
        }
        Ok(())
    })
}

/// Per-frame inference output: `frame,time_s`, one raw column per head and,
/// unless `post` is empty for every row, one `<head>_post` column per head.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub frame: usize,
    pub time_s: f64,
    pub raw: Vec<f32>,
    pub post: Vec<f64>,
}

pub fn write_predictions(path: &Path, heads: &[&str], rows: &[PredictionRow]) -> io::Result<()> {
    let with_post = rows.first().is_some_and(|r| !r.post.is_empty());
    let mut header = vec!["frame".to_owned(), "time_s".to_owned()];
    header.extend(heads.iter().map(|h| h.to_string()));
    if with_post {
        header.extend(heads.iter().map(|h| format!("{h}_post")));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, |w| {
        for r in rows {
            let mut rec = vec![r.frame.to_string(), r.time_s.to_string()];
            rec.extend(r.raw.iter().map(|v| v.to_string()));
            rec.extend(r.post.iter().map(|v| v.to_string()));
            w.write_record(rec)?;
        }
        Ok(())
    })
}

/// Parses a predictions CSV back into its header and numeric rows.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), FormatError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push((0..rec.len()).map(|i| field(path, &rec, i, "value")).collect::<Result<Vec<f64>, _>>()?);
    }
    Ok((header, rows))
}

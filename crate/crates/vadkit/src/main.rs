use std::error::Error as StdError;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use vadkit::config::{ConfigError, RunConfig};
use vadkit::dataset::{self, DatasetError};
use vadkit::formats::{self, FormatError};
use vadkit::modelfile::{self, ModelFileError};
use vadkit::sources::WavDirSources;
use vadkit::wav::{self, WavError};
use vadkit::{infer, modelfile::FORMAT_VERSION};
use vadkit_core::eval::{self, ClipScores, ScoreUnit};
use vadkit_core::labels;
use vadkit_core::train::{self, Progress, TrainError};
use vadkit_core::{dsp, HeadKind, SAMPLE_RATE};

/// Noise-robust voice activity detection: data generation, training,
/// streaming inference and evaluation.
#[derive(Parser)]
#[command(name = "vadkit", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides one configuration key (`key=value`); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus: mixtures, label CSVs and a manifest.
    GenData {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Also store target speech and scaled noise (32-bit float WAV).
        #[arg(long)]
        components: bool,
        #[arg(long)]
        speech_dir: Option<PathBuf>,
        #[arg(long)]
        noise_dir: Option<PathBuf>,
    },
    /// Compute VAD/VNR labels from target speech and noise recordings.
    Label {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump log-mel features of a WAV file.
    Features {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write the best checkpoint.
    Train {
        /// Training manifest or dataset directory.
        #[arg(long)]
        train: PathBuf,
        /// Validation manifest or dataset directory.
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        loss: Option<String>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Frame-wise predictions for one WAV file.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print processing time per second of audio.
        #[arg(long)]
        rtf: bool,
        /// Omit the post-processed columns.
        #[arg(long)]
        no_postprocess: bool,
        /// Whole-clip forward pass instead of frame-by-frame streaming.
        #[arg(long)]
        batch: bool,
    },
    /// AUC/EER report of a model on a labelled manifest.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output head to score; defaults to VNR when present.
        #[arg(long, value_enum)]
        head: Option<HeadArg>,
        /// Apply the trailing percentile filter before scoring.
        #[arg(long)]
        postprocess: bool,
        /// Export `trace_<index>.csv` for the first N clips.
        #[arg(long, default_value_t = 0)]
        traces: usize,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Describe a model file.
    Info {
        #[arg(long)]
        model: PathBuf,
    },
    /// Print every configuration key with its current value.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Vad,
    Vnr,
}

impl From<HeadArg> for HeadKind {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Vad => HeadKind::Vad,
            HeadArg::Vnr => HeadKind::Vnr,
        }
    }
}

/// Bad arguments or configuration (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct InvalidConfig(String);

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DATA: u8 = 4;

fn io_or_data(e: &io::Error) -> u8 {
    match e.kind() {
        io::ErrorKind::InvalidData => EXIT_DATA,
        _ => EXIT_IO,
    }
}

fn exit_code(err: &(dyn StdError + 'static)) -> Option<u8> {
    if err.is::<InvalidConfig>() {
        return Some(EXIT_CONFIG);
    }
    if let Some(e) = err.downcast_ref::<ConfigError>() {
        return Some(match e {
            ConfigError::Io(e) => io_or_data(e),
            _ => EXIT_CONFIG,
        });
    }
    if let Some(e) = err.downcast_ref::<WavError>() {
        return Some(match e {
            WavError::FileNotFound(_) => EXIT_IO,
            WavError::Io(e) => io_or_data(e),
            _ => EXIT_DATA,
        });
    }
    if let Some(e) = err.downcast_ref::<ModelFileError>() {
        return Some(match e {
            ModelFileError::Io(e) => io_or_data(e),
            _ => EXIT_DATA,
        });
    }
    if let Some(e) = err.downcast_ref::<FormatError>() {
        return Some(match e {
            FormatError::Io(e) => io_or_data(e),
            FormatError::Csv(c) if c.is_io_error() => EXIT_IO,
            _ => EXIT_DATA,
        });
    }
    if let Some(e) = err.downcast_ref::<DatasetError>() {
        return match e {
            DatasetError::EmptyCount => Some(EXIT_CONFIG),
            DatasetError::Wav(w) => exit_code(w),
            DatasetError::Format(f) => exit_code(f),
            DatasetError::Io(e) => Some(io_or_data(e)),
            _ => Some(EXIT_DATA),
        };
    }
    if let Some(e) = err.downcast_ref::<TrainError>() {
        return Some(match e {
            TrainError::InvalidConfig(_) | TrainError::WrongOutputArity { .. } => EXIT_CONFIG,
            _ => EXIT_DATA,
        });
    }
    if let Some(e) = err.downcast_ref::<io::Error>() {
        return Some(io_or_data(e));
    }
    None
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.chain().find_map(exit_code).unwrap_or(EXIT_DATA);
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply(s)?;
    }
    match cli.cmd {
        Cmd::GenData { count, seed, out, jobs, components, speech_dir, noise_dir } => {
            override_opt(&mut cfg, "seed", seed)?;
            override_opt(&mut cfg, "jobs", jobs)?;
            override_path(&mut cfg, "speech_dir", speech_dir)?;
            override_path(&mut cfg, "noise_dir", noise_dir)?;
            gen_data(&cfg, count, &out, components)
        }
        Cmd::Label { target, noise, out } => label(&cfg, &target, &noise, &out),
        Cmd::Features { wav, out } => features(&cfg, &wav, &out),
        Cmd::Train { train, val, out, log, loss, max_epochs, lr, batch, patience, seed, jobs } => {
            override_opt(&mut cfg, "loss", loss)?;
            override_opt(&mut cfg, "max_epochs", max_epochs)?;
            override_opt(&mut cfg, "lr", lr)?;
            override_opt(&mut cfg, "batch_clips", batch)?;
            override_opt(&mut cfg, "patience", patience)?;
            override_opt(&mut cfg, "seed", seed)?;
            override_opt(&mut cfg, "jobs", jobs)?;
            let log = log.unwrap_or_else(|| with_suffix(&out, ".log.csv"));
            train_cmd(&cfg, &train, &val, &out, &log)
        }
        Cmd::Infer { model, wav, out, rtf, no_postprocess, batch } => infer_cmd(&cfg, &model, &wav, &out, rtf, !no_postprocess, batch),
        Cmd::Eval { model, manifest, out, head, postprocess, traces, jobs } => {
            override_opt(&mut cfg, "jobs", jobs)?;
            eval_cmd(&cfg, &model, &manifest, &out, head.map(Into::into), postprocess, traces)
        }
        Cmd::Info { model } => info(&model),
        Cmd::Config => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn override_opt<T: ToString>(cfg: &mut RunConfig, key: &str, v: Option<T>) -> Result<()> {
    if let Some(v) = v {
        cfg.set(key, &v.to_string())?;
    }
    Ok(())
}

fn override_path(cfg: &mut RunConfig, key: &str, v: Option<PathBuf>) -> Result<()> {
    override_opt(cfg, key, v.map(|p| p.display().to_string()))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn gen_data(cfg: &RunConfig, count: usize, out: &Path, components: bool) -> Result<()> {
    if count == 0 {
        bail!(InvalidConfig("--count must be at least 1".into()));
    }
    let synth = cfg.synth()?;
    let sources = WavDirSources::new(cfg.dir("speech_dir"), cfg.dir("noise_dir"))?;
    let rows = dataset::generate(out, count, cfg.seed()?, &synth, &sources, cfg.jobs()?, components)?;
    eprintln!("wrote {} examples and {}", rows.len(), out.join(dataset::MANIFEST_FILE).display());
    Ok(())
}

fn label(cfg: &RunConfig, target: &Path, noise: &Path, out: &Path) -> Result<()> {
    let lc = cfg.labels()?;
    let x = wav::read_wav(target)?;
    let v = wav::read_wav(noise)?;
    let track = labels::labels_from_target(&x.samples_f64(), &v.samples_f64(), &lc)?;
    formats::write_labels(out, &track)?;
    Ok(())
}

fn features(cfg: &RunConfig, wav_path: &Path, out: &Path) -> Result<()> {
    let clip = wav::read_wav(wav_path)?;
    let feats = dsp::clip_features(&clip, cfg.stft()?)?;
    formats::write_features(out, &feats)?;
    Ok(())
}

fn train_cmd(cfg: &RunConfig, train_path: &Path, val_path: &Path, out: &Path, log: &Path) -> Result<()> {
    let tc = cfg.train()?;
    let jobs = cfg.jobs()?;
    let train_set = dataset::load(train_path, tc.stft, jobs).with_context(|| format!("loading {}", train_path.display()))?;
    let val_set = dataset::load(val_path, tc.stft, jobs).with_context(|| format!("loading {}", val_path.display()))?;
    let train_seqs: Vec<_> = train_set.into_iter().map(|c| c.sequence).collect();
    let val_seqs: Vec<_> = val_set.into_iter().map(|c| c.sequence).collect();
    eprintln!("training {} on {} clips, validating on {}", tc.loss_kind.name(), train_seqs.len(), val_seqs.len());
    let outcome = train::train_loop_with(&tc, &train_seqs, |m| train::validation_auc(m, &val_seqs), |p| {
        if let Progress::Epoch(e) = p {
            eprintln!("epoch {} loss {:.5} val_auc {:.4}{}", e.epoch, e.mean_loss, e.val_auc, if e.improved { " *" } else { "" });
        }
    })?;
    let h = &outcome.history;
    formats::write_train_log(log, &h.steps, &h.epochs)?;
    modelfile::save_optimizer(&outcome.optimizer, &with_suffix(out, ".opt"))?;
    modelfile::save_model(&outcome.model, out)?;
    eprintln!("best epoch {} val_auc {:.4}{}", h.best_epoch, h.best_auc, if h.stopped_early { " (stopped early)" } else { "" });
    Ok(())
}

fn infer_cmd(cfg: &RunConfig, model_path: &Path, wav_path: &Path, out: &Path, rtf: bool, postprocess: bool, batch: bool) -> Result<()> {
    let model = modelfile::load_model(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let clip = wav::read_wav(wav_path)?;
    let stft = cfg.stft()?;
    let post = if postprocess { Some(cfg.post()?) } else { None };
    let res = if batch { infer::run_batch(&model, &clip, stft, post)? } else { infer::run_streaming(&model, &clip, stft, post, stft.hop)? };
    let heads: Vec<&str> = model.heads().iter().map(|h| h.name()).collect();
    formats::write_predictions(out, &heads, &res.rows(&stft))?;
    if rtf {
        println!("rtf: {:.3} ms per second of audio ({} frames, {:.2} s audio)", res.ms_per_audio_second(), res.frames.len(), res.audio_s);
    }
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, model_path: &Path, manifest: &Path, out: &Path, head: Option<HeadKind>, postprocess: bool, traces: usize) -> Result<()> {
    let model = modelfile::load_model(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let head_idx = match head {
        Some(h) => model
            .head_index(h)
            .ok_or_else(|| InvalidConfig(format!("model has no {} head (heads: {:?})", h.name(), model.heads())))?,
        None => train::validation_head(&model),
    };
    let unit = match model.heads()[head_idx] {
        HeadKind::Vnr => ScoreUnit::VnrUnit,
        HeadKind::Vad => ScoreUnit::Probability,
    };
    let stft = cfg.stft()?;
    let post = cfg.post()?;
    let edges = cfg.snr_edges()?;
    let jobs = cfg.jobs()?;
    let clips = dataset::load(manifest, stft, jobs)?;
    let n_out = model.n_out();
    // one clip per forward pass so results do not depend on --jobs
    let outputs: Vec<Vec<Vec<f64>>> = dataset::pool(jobs)?.install(|| {
        clips
            .par_iter()
            .map(|c| {
                let raw = &train::predict_sequences(&model, &[c.sequence.features.as_slice()], 1)?[0];
                Ok((0..n_out)
                    .map(|k| {
                        let col: Vec<f64> = raw.iter().skip(k).step_by(n_out).map(|&v| v as f64).collect();
                        if postprocess {
                            eval::postprocess(&col, post.window_frames, post.percentile)
                        } else {
                            col
                        }
                    })
                    .collect())
            })
            .collect::<Result<_, TrainError>>()
    })?;
    let scored: Vec<ClipScores> = clips
        .iter()
        .zip(&outputs)
        .map(|(c, o)| ClipScores { snr_db: c.row.snr_db, scores: o[head_idx].clone(), labels: c.sequence.vad.iter().map(|&v| v > 0.5).collect() })
        .collect();
    let report = eval::evaluate(&scored, &edges, unit)?;
    std::fs::create_dir_all(out)?;
    formats::write_overall(&out.join("overall.csv"), &report)?;
    formats::write_by_snr(&out.join("by_snr.csv"), &report.by_snr.rows)?;
    let vad_idx = model.head_index(HeadKind::Vad);
    let vnr_idx = model.head_index(HeadKind::Vnr);
    for (c, o) in clips.iter().zip(&outputs).take(traces) {
        let rows = eval::trace_rows(
            c.mixture.samples(),
            SAMPLE_RATE,
            stft.frame_len,
            stft.hop,
            vad_idx.map(|i| o[i].as_slice()),
            vnr_idx.map(|i| o[i].as_slice()),
        )?;
        formats::write_trace(&out.join(format!("trace_{:05}.csv", c.row.index)), &rows)?;
    }
    println!("auc {:.4} eer {:.4} eer_threshold {:.4} ({} clips, head {})", report.overall_auc, report.eer, report.eer_threshold, clips.len(), model.heads()[head_idx].name());
    for r in &report.by_snr.rows {
        println!("  snr [{}, {}) mean_auc {:.4} std {:.4} n={}", r.bin_lo, r.bin_hi, r.mean_auc, r.std_auc, r.count);
    }
    if report.by_snr.excluded > 0 {
        println!("  {} single-class clips excluded from per-SNR AUC", report.by_snr.excluded);
    }
    Ok(())
}

fn info(model_path: &Path) -> Result<()> {
    let model = modelfile::load_model(model_path)?;
    println!("format version {FORMAT_VERSION}");
    println!("outputs {} ({})", model.n_out(), model.heads().iter().map(|h| h.name()).collect::<Vec<_>>().join(", "));
    println!("parameters {}", model.parameter_count());
    for (name, t) in model.named_tensors() {
        println!("  {name:<12} {:?}", t.shape());
    }
    Ok(())
}

//! Command-line entry point wiring the toolkit into reproducible experiments.
//!
//! Exit codes: 0 success, 1 validation/config error, 2 I/O error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use f0net::data::{
    assemble_frames, gen_synthetic, load_corpus, save_corpus, split_frames, SyntheticSpec,
    UtteranceRecord,
};
use f0net::dsp::{compute_norm_stats, extract_f0, read_wav, F0Trajectory, TrackerConfig};
use f0net::error::{Error, Result};
use f0net::eval::{evaluate, export_trajectories_csv, swap_experiment};
use f0net::io_util::{read_file, write_atomic};
use f0net::nn::{grad_check, init_model, Activation, ModelConfig};
use f0net::train::{
    load_bundle, predict_utterance, save_bundle, train, write_history_csv, TrainConfig,
};
use f0net::tuner::{run_study, write_best_json, write_study_csv, SearchSpace};
use f0net::Mat;

const VAL_FRACTION: f64 = 0.10;

#[derive(Parser)]
#[command(
    name = "f0net",
    version,
    about = "Frame-wise F0 trajectory synthesis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus file.
    GenSynth {
        /// Spec JSON; defaults apply for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Train a model on a corpus and write the bundle plus history CSV.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Config JSON with optional "model" and "train" sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Random-search study over (lr, alpha, dropout_p).
    Tune {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Study log CSV path; the best-trial JSON lands next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        best: Option<PathBuf>,
        /// Per-trial epoch cap (reduced budget).
        #[arg(long, default_value_t = 30)]
        trial_epochs: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Evaluate a bundle over a corpus and write a JSON report.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Cross-embedding swap: predict a source utterance with a donor speaker.
    Swap {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Source utterance id.
        #[arg(long)]
        source: String,
        /// Donor speaker id.
        #[arg(long)]
        donor: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract a ground-truth F0 trajectory from a WAV file.
    ExtractF0 {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 6)]
        input_dim: usize,
        /// Comma-separated hidden widths.
        #[arg(long, default_value = "16,16,16")]
        hidden: String,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 0.00022)]
        alpha: f64,
        #[arg(long)]
        seed: u64,
    },
}

/// Optional config file for `train` and `tune`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    train: TrainConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    activation: Activation,
    #[serde(default)]
    dropout_p: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 256, 256]
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            hidden: default_hidden(),
            activation: default_activation(),
            dropout_p: 0.0,
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Shape(_)
        | Error::NoVoicedFrames
        | Error::InsufficientOverlap(_) => 1,
        Error::Io { .. } | Error::Format(_) => 2,
        Error::NonFinite(_) => 3,
    }
}

fn parse_config_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_file_config(path: Option<&PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => parse_config_json(p),
        None => Ok(FileConfig::default()),
    }
}

fn corpus_dims(records: &[UtteranceRecord]) -> Result<(usize, usize)> {
    let first = records
        .first()
        .ok_or_else(|| Error::Config("corpus is empty".into()))?;
    Ok((first.bn.dim(), first.xvec.len()))
}

fn prepare_frames(
    records: &[UtteranceRecord],
    seed: u64,
) -> Result<(
    f0net::data::FrameMatrix,
    f0net::data::FrameMatrix,
    f0net::dsp::NormStats,
)> {
    let trajectories: Vec<F0Trajectory> = records.iter().map(|r| r.f0.clone()).collect();
    let stats = compute_norm_stats(&trajectories)?;
    let frames = assemble_frames(records, &stats)?;
    let (train_frames, val_frames) = split_frames(&frames, VAL_FRACTION, seed)?;
    Ok((train_frames, val_frames, stats))
}

fn cmd_gen_synth(spec_path: Option<&PathBuf>, out: &Path, seed: u64) -> Result<()> {
    let mut spec: SyntheticSpec = match spec_path {
        Some(p) => parse_config_json(p)?,
        None => SyntheticSpec::default(),
    };
    spec.seed = seed;
    let records = gen_synthetic(&spec)?;
    save_corpus(&records, out)?;
    let speakers: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.speaker_id.as_str()).collect();
    let frames: usize = records.iter().map(|r| r.n_frames()).sum();
    let voiced: usize = records.iter().map(|r| r.f0.voiced_count()).sum();
    println!(
        "wrote {}: {} speakers, {} utterances, {frames} frames ({voiced} voiced)",
        out.display(),
        speakers.len(),
        records.len()
    );
    Ok(())
}

fn cmd_train(
    corpus: &Path,
    config: Option<&PathBuf>,
    out: &Path,
    history_path: &Path,
    seed: u64,
) -> Result<()> {
    let records = load_corpus(corpus)?;
    let file_cfg = load_file_config(config)?;
    let (d_bn, d_xv) = corpus_dims(&records)?;
    let model_cfg = ModelConfig {
        input_dim: d_bn + d_xv,
        hidden: file_cfg.model.hidden.clone(),
        activation: file_cfg.model.activation,
        dropout_p: file_cfg.model.dropout_p,
    };
    let mut train_cfg = file_cfg.train;
    train_cfg.seed = seed;
    train_cfg.validate()?;

    let (train_frames, val_frames, stats) = prepare_frames(&records, seed)?;
    let (bundle, history) = train(&train_frames, &val_frames, &model_cfg, &train_cfg, &stats)?;
    save_bundle(&bundle, out)?;
    write_history_csv(&history, history_path)?;
    let best = history
        .iter()
        .map(|h| h.val_loss)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained {} epochs, best val loss {best}; bundle {}, history {}",
        history.len(),
        out.display(),
        history_path.display()
    );
    Ok(())
}

fn cmd_tune(
    corpus: &Path,
    config: Option<&PathBuf>,
    trials: usize,
    out: &Path,
    best_path: Option<&PathBuf>,
    trial_epochs: usize,
    seed: u64,
) -> Result<()> {
    let records = load_corpus(corpus)?;
    let file_cfg = load_file_config(config)?;
    let (d_bn, d_xv) = corpus_dims(&records)?;
    let model_cfg = ModelConfig {
        input_dim: d_bn + d_xv,
        hidden: file_cfg.model.hidden.clone(),
        activation: file_cfg.model.activation,
        dropout_p: file_cfg.model.dropout_p,
    };
    let (train_frames, val_frames, stats) = prepare_frames(&records, seed)?;

    let base_cfg = file_cfg.train;
    let objective = |params: &f0net::tuner::TrialParams| -> Result<f64> {
        let mut cfg = base_cfg.clone();
        cfg.lr = params.lr;
        cfg.alpha = params.alpha;
        cfg.dropout_p = params.dropout_p;
        cfg.max_epochs = trial_epochs;
        cfg.seed = seed;
        let (_, history) = train(&train_frames, &val_frames, &model_cfg, &cfg, &stats)?;
        Ok(history
            .iter()
            .map(|h| h.val_loss)
            .fold(f64::INFINITY, f64::min))
    };

    let (best, all) = run_study(&SearchSpace::default(), trials, seed, objective)?;
    write_study_csv(&all, out)?;
    let default_best = out.with_extension("best.json");
    let best_out = best_path.map(|p| p.as_path()).unwrap_or(&default_best);
    write_best_json(&best, best_out)?;
    println!(
        "{} trials; best objective {} at lr={} alpha={} dropout_p={}; log {}, best {}",
        all.len(),
        best.objective.unwrap(),
        best.params.lr,
        best.params.alpha,
        best.params.dropout_p,
        out.display(),
        best_out.display()
    );
    Ok(())
}

fn cmd_eval(bundle_path: &Path, corpus: &Path, report_path: &Path) -> Result<()> {
    let bundle = load_bundle(bundle_path)?;
    let records = load_corpus(corpus)?;
    let report = evaluate(&bundle, &records)?;
    let json = serde_json::to_vec_pretty(&report).expect("report serializes");
    write_atomic(report_path, &json)?;
    println!(
        "rho_f0 {:.4}, voicing f1 {:.4}, rmse {:.2} Hz over {} utterances ({} skipped); report {}",
        report.rho_f0,
        report.voicing.f1,
        report.rmse_hz,
        report.n_utterances,
        report.n_skipped,
        report_path.display()
    );
    Ok(())
}

fn cmd_swap(
    bundle_path: &Path,
    corpus: &Path,
    source_id: &str,
    donor_id: &str,
    out: &Path,
) -> Result<()> {
    let bundle = load_bundle(bundle_path)?;
    let records = load_corpus(corpus)?;
    let source = records
        .iter()
        .find(|r| r.utt_id == source_id)
        .ok_or_else(|| {
            let ids: Vec<&str> = records.iter().map(|r| r.utt_id.as_str()).collect();
            Error::Config(format!(
                "unknown source utterance {source_id:?}; valid ids: {}",
                ids.join(", ")
            ))
        })?;
    let donor = records
        .iter()
        .find(|r| r.speaker_id == donor_id)
        .ok_or_else(|| {
            let ids: std::collections::BTreeSet<&str> =
                records.iter().map(|r| r.speaker_id.as_str()).collect();
            Error::Config(format!(
                "unknown donor speaker {donor_id:?}; valid speakers: {}",
                ids.into_iter().collect::<Vec<_>>().join(", ")
            ))
        })?;

    let self_pred = predict_utterance(&bundle, &source.bn, &source.xvec)?;
    let result = swap_experiment(&bundle, source, &donor.xvec, donor_id)?;
    export_trajectories_csv(
        &[
            ("truth", &source.f0),
            ("predicted_self", &self_pred),
            ("predicted_swap", &result.predicted),
        ],
        out,
    )?;
    match result.voiced_mean_shift_hz {
        Some(shift) => {
            println!(
                "{{\"source\":\"{}\",\"donor\":\"{}\",\"voiced_mean_shift_hz\":{shift},\"voicing_agreement\":{}}}",
                result.source_utt_id, result.donor_speaker_id, result.voicing_agreement
            );
            println!("overlay {}", out.display());
            Ok(())
        }
        None => Err(Error::InsufficientOverlap(format!(
            "no voiced frames to compare (voicing agreement {}); overlay written to {}",
            result.voicing_agreement,
            out.display()
        ))),
    }
}

fn cmd_extract_f0(wav: &Path, out: &Path) -> Result<()> {
    let audio = read_wav(wav)?;
    let f0 = extract_f0(&audio, &TrackerConfig::default())?;
    write_atomic(out, f0.to_csv().as_bytes())?;
    println!(
        "{} frames, {} voiced; trajectory {}",
        f0.len(),
        f0.voiced_count(),
        out.display()
    );
    Ok(())
}

fn cmd_gradcheck(
    input_dim: usize,
    hidden: &str,
    batch: usize,
    alpha: f64,
    seed: u64,
) -> Result<()> {
    let hidden: Vec<usize> = hidden
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad hidden width {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if batch == 0 {
        return Err(Error::Config("batch must be >= 1".into()));
    }
    let cfg = ModelConfig {
        input_dim,
        hidden,
        activation: Activation::Relu,
        dropout_p: 0.0,
    };
    let model = init_model(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut batch_mat = Mat::zeros(batch, input_dim);
    for v in batch_mat.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut voiced: Vec<bool> = (0..batch).map(|_| rng.gen_bool(0.7)).collect();
    voiced[0] = true;

    let err = grad_check(&model, &batch_mat, &targets, &voiced, alpha, 1e-6)?;
    println!("max relative gradient error: {err:e}");
    if err < 1e-4 {
        Ok(())
    } else {
        Err(Error::NonFinite(format!(
            "gradient check failed: max relative error {err:e} >= 1e-4"
        )))
    }
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::GenSynth { spec, out, seed } => cmd_gen_synth(spec.as_ref(), out, *seed),
        Cmd::Train {
            corpus,
            config,
            out,
            history,
            seed,
        } => cmd_train(corpus, config.as_ref(), out, history, *seed),
        Cmd::Tune {
            corpus,
            config,
            trials,
            out,
            best,
            trial_epochs,
            seed,
        } => cmd_tune(
            corpus,
            config.as_ref(),
            *trials,
            out,
            best.as_ref(),
            *trial_epochs,
            *seed,
        ),
        Cmd::Eval {
            bundle,
            corpus,
            report,
        } => cmd_eval(bundle, corpus, report),
        Cmd::Swap {
            bundle,
            corpus,
            source,
            donor,
            out,
        } => cmd_swap(bundle, corpus, source, donor, out),
        Cmd::ExtractF0 { wav, out } => cmd_extract_f0(wav, out),
        Cmd::Gradcheck {
            input_dim,
            hidden,
            batch,
            alpha,
            seed,
        } => cmd_gradcheck(*input_dim, hidden, *batch, *alpha, *seed),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

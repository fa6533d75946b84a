//! Trajectory metrics and the cross-embedding swap experiment.
//!
//! The pitch correlation is the Pearson correlation of the Hz values over
//! frames voiced in *both* trajectories; voicing metrics treat voiced as the
//! positive class. The swap experiment predicts an utterance with a donor
//! speaker's embedding and measures how far the voiced-mean F0 moves.

use std::path::Path;

use serde::Serialize;

use crate::data::UtteranceRecord;
use crate::dsp::F0Trajectory;
use crate::error::{Error, Result};
use crate::io_util::write_atomic;
use crate::train::{predict_utterance, TrainedBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoicingMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean per-utterance Pearson correlation over mutually voiced frames.
    pub rho_f0: f64,
    pub voicing: VoicingMetrics,
    /// Mean per-utterance RMSE in Hz over mutually voiced frames.
    pub rmse_hz: f64,
    /// Same, in the natural-log domain.
    pub rmse_log: f64,
    /// Utterances that contributed to the means.
    pub n_utterances: usize,
    /// Utterances skipped for lacking >= 2 mutually voiced frames.
    pub n_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapResult {
    pub source_utt_id: String,
    pub donor_speaker_id: String,
    pub predicted: F0Trajectory,
    /// Mean voiced F0 of the prediction minus mean voiced F0 of the source
    /// ground truth; `None` when either side has no voiced frames.
    pub voiced_mean_shift_hz: Option<f64>,
    /// Fraction of frames whose voiced/unvoiced decision matches the source.
    pub voicing_agreement: f64,
}

/// Indices of frames voiced in both trajectories.
fn mutual_voiced(a: &F0Trajectory, b: &F0Trajectory) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "trajectory lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok((0..a.len())
        .filter(|&i| a.is_voiced(i) && b.is_voiced(i))
        .collect())
}

/// Pearson correlation of the Hz values over mutually voiced frames. Returns
/// 0.0 when either side has zero variance there; errors with fewer than two
/// mutually voiced frames.
pub fn pitch_correlation(a: &F0Trajectory, b: &F0Trajectory) -> Result<f64> {
    let idx = mutual_voiced(a, b)?;
    if idx.len() < 2 {
        return Err(Error::InsufficientOverlap(format!(
            "{} mutually voiced frames, need at least 2",
            idx.len()
        )));
    }
    let n = idx.len() as f64;
    let mean_a = idx.iter().map(|&i| a.values[i]).sum::<f64>() / n;
    let mean_b = idx.iter().map(|&i| b.values[i]).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for &i in &idx {
        let da = a.values[i] - mean_a;
        let db = b.values[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Binary voiced/unvoiced metrics with voiced as the positive class.
/// Precision, recall, and F1 fall back to 0 when their denominator is zero.
pub fn voicing_metrics(pred: &F0Trajectory, truth: &F0Trajectory) -> Result<VoicingMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "trajectory lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..pred.len() {
        match (pred.is_voiced(i), truth.is_voiced(i)) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
        }
    }
    let total = pred.len().max(1) as f64;
    let accuracy = (tp + tn) as f64 / total;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fne > 0 {
        tp as f64 / (tp + fne) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(VoicingMetrics {
        accuracy,
        precision,
        recall,
        f1,
    })
}

fn rmse(values: impl Iterator<Item = (f64, f64)>) -> (f64, usize) {
    let mut sq = 0.0;
    let mut n = 0usize;
    for (a, b) in values {
        let d = a - b;
        sq += d * d;
        n += 1;
    }
    if n == 0 {
        (0.0, 0)
    } else {
        ((sq / n as f64).sqrt(), n)
    }
}

/// Evaluates a predictor over a corpus; utterances with fewer than two
/// mutually voiced frames are skipped and counted. Utterances are processed
/// in `utt_id` order so aggregation is deterministic.
pub fn evaluate_with<F>(predict: F, corpus: &[UtteranceRecord]) -> Result<EvalReport>
where
    F: Fn(&UtteranceRecord) -> Result<F0Trajectory>,
{
    if corpus.is_empty() {
        return Err(Error::Config("cannot evaluate an empty corpus".into()));
    }
    let mut order: Vec<&UtteranceRecord> = corpus.iter().collect();
    order.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));

    let mut rho_sum = 0.0;
    let mut voicing_sum = (0.0, 0.0, 0.0, 0.0);
    let mut rmse_hz_sum = 0.0;
    let mut rmse_log_sum = 0.0;
    let mut n_used = 0usize;
    let mut n_skipped = 0usize;

    for record in order {
        let pred = predict(record)?;
        match pitch_correlation(&pred, &record.f0) {
            Ok(rho) => {
                let vm = voicing_metrics(&pred, &record.f0)?;
                let idx = mutual_voiced(&pred, &record.f0)?;
                let (r_hz, _) = rmse(idx.iter().map(|&i| (pred.values[i], record.f0.values[i])));
                let (r_log, _) = rmse(
                    idx.iter()
                        .map(|&i| (pred.values[i].ln(), record.f0.values[i].ln())),
                );
                rho_sum += rho;
                voicing_sum.0 += vm.accuracy;
                voicing_sum.1 += vm.precision;
                voicing_sum.2 += vm.recall;
                voicing_sum.3 += vm.f1;
                rmse_hz_sum += r_hz;
                rmse_log_sum += r_log;
                n_used += 1;
            }
            Err(Error::InsufficientOverlap(_)) => n_skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if n_used == 0 {
        return Err(Error::InsufficientOverlap(format!(
            "all {n_skipped} utterances lacked mutually voiced frames"
        )));
    }
    let n = n_used as f64;
    Ok(EvalReport {
        rho_f0: rho_sum / n,
        voicing: VoicingMetrics {
            accuracy: voicing_sum.0 / n,
            precision: voicing_sum.1 / n,
            recall: voicing_sum.2 / n,
            f1: voicing_sum.3 / n,
        },
        rmse_hz: rmse_hz_sum / n,
        rmse_log: rmse_log_sum / n,
        n_utterances: n_used,
        n_skipped,
    })
}

/// Evaluates a trained bundle over a corpus.
pub fn evaluate(bundle: &TrainedBundle, corpus: &[UtteranceRecord]) -> Result<EvalReport> {
    evaluate_with(|r| predict_utterance(bundle, &r.bn, &r.xvec), corpus)
}

/// Predicts the source utterance's linguistic features with a donor speaker's
/// embedding and compares against the source ground truth.
pub fn swap_experiment(
    bundle: &TrainedBundle,
    source: &UtteranceRecord,
    donor_xvec: &[f32],
    donor_speaker_id: &str,
) -> Result<SwapResult> {
    let predicted = predict_utterance(bundle, &source.bn, donor_xvec)?;
    let n = predicted.len().max(1);
    let agree = (0..predicted.len())
        .filter(|&i| predicted.is_voiced(i) == source.f0.is_voiced(i))
        .count();
    let voiced_mean_shift_hz = match (predicted.voiced_mean(), source.f0.voiced_mean()) {
        (Some(p), Some(t)) => Some(p - t),
        _ => None,
    };
    Ok(SwapResult {
        source_utt_id: source.utt_id.clone(),
        donor_speaker_id: donor_speaker_id.to_string(),
        predicted,
        voiced_mean_shift_hz,
        voicing_agreement: agree as f64 / n as f64,
    })
}

/// Long-format overlay CSV: `label,frame_index,time_s,f0_hz`.
pub fn trajectories_csv(items: &[(&str, &F0Trajectory)]) -> String {
    let mut out = String::from("label,frame_index,time_s,f0_hz\n");
    for (label, traj) in items {
        for (i, v) in traj.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:.3},{}\n",
                label,
                i,
                i as f64 * traj.hop,
                v
            ));
        }
    }
    out
}

pub fn export_trajectories_csv(items: &[(&str, &F0Trajectory)], path: &Path) -> Result<()> {
    write_atomic(path, trajectories_csv(items).as_bytes())
}

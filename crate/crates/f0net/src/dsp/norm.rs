//! Global mean-variance normalization of log-F0 and the voiced output gate.
//!
//! F0 targets are regressed in the log domain: `y = (ln f0 - mean) / std`,
//! with the statistics pooled over every voiced frame of the training corpus.

use serde::{Deserialize, Serialize};

use crate::dsp::F0Trajectory;
use crate::error::{Error, Result};

/// Floor applied to the standard deviation so constant corpora stay invertible.
pub const STD_LOG_FLOOR: f64 = 1e-6;

/// Mean and standard deviation of `ln(F0)` over voiced training frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean_log: f64,
    pub std_log: f64,
}

impl NormStats {
    pub fn new(mean_log: f64, std_log: f64) -> Self {
        NormStats {
            mean_log,
            std_log: std_log.max(STD_LOG_FLOOR),
        }
    }
}

/// Pools `ln(F0)` over the voiced frames of all trajectories and returns the
/// global mean and population standard deviation (floored at [`STD_LOG_FLOOR`]).
pub fn compute_norm_stats(trajectories: &[F0Trajectory]) -> Result<NormStats> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in trajectories {
        for &v in &t.values {
            if v > 0.0 {
                sum += v.ln();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoVoicedFrames);
    }
    let mean = sum / count as f64;
    let mut sq = 0.0;
    for t in trajectories {
        for &v in &t.values {
            if v > 0.0 {
                let d = v.ln() - mean;
                sq += d * d;
            }
        }
    }
    let std = (sq / count as f64).sqrt();
    Ok(NormStats::new(mean, std))
}

/// `(ln f0 - mean) / std`; errors on non-positive input.
pub fn normalize(f0_hz: f64, stats: &NormStats) -> Result<f64> {
    if f0_hz <= 0.0 {
        return Err(Error::Config(format!(
            "cannot normalize non-positive F0 {f0_hz}"
        )));
    }
    Ok((f0_hz.ln() - stats.mean_log) / stats.std_log)
}

/// Inverse of [`normalize`]: `exp(mean + std * y)`.
pub fn denormalize(y: f64, stats: &NormStats) -> f64 {
    (stats.mean_log + stats.std_log * y).exp()
}

/// Passes the denormalized prediction through when the voicing probability is
/// strictly greater than 0.5, otherwise zeroes the frame out. Exactly 0.5 is
/// unvoiced.
pub fn gate_output(pred_norm: f64, voicing_prob: f64, stats: &NormStats) -> f64 {
    if voicing_prob > 0.5 {
        denormalize(pred_norm, stats)
    } else {
        0.0
    }
}

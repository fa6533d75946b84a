//! Joint loss: masked regression MSE plus weighted voicing BCE.
//!
//! The MSE term covers voiced frames only — unvoiced frames have no defined
//! log-F0 target — while the BCE term is computed from the raw logit against
//! the voiced/unvoiced label over all frames:
//!
//! `total = mean_voiced((f0 - f0_hat)^2) + alpha * mean_all(bce(logit, v))`

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse_term: f64,
    pub bce_term: f64,
    pub alpha: f64,
    pub n_voiced: usize,
}

/// Stable binary cross entropy from a raw logit:
/// `max(x, 0) - x*y + ln(1 + exp(-|x|))`.
#[inline]
fn bce_with_logit(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

fn check_shapes(preds: &Mat, targets_f0: &[f64], voiced: &[bool], alpha: f64) -> Result<()> {
    if preds.cols() != 2 {
        return Err(Error::Shape(format!(
            "predictions must have 2 columns, got {}",
            preds.cols()
        )));
    }
    if preds.rows() != targets_f0.len() || preds.rows() != voiced.len() {
        return Err(Error::Shape(format!(
            "batch size mismatch: preds {}, targets {}, voiced {}",
            preds.rows(),
            targets_f0.len(),
            voiced.len()
        )));
    }
    if alpha < 0.0 {
        return Err(Error::Config(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(())
}

pub fn loss_forward(
    preds: &Mat,
    targets_f0: &[f64],
    voiced: &[bool],
    alpha: f64,
) -> Result<LossBreakdown> {
    check_shapes(preds, targets_f0, voiced, alpha)?;
    let mut acc = LossAccumulator::new();
    acc.add_batch(preds, targets_f0, voiced);
    Ok(acc.finish(alpha))
}

/// Analytic gradient of [`loss_forward`]'s total with respect to the
/// predictions. Column 0 is exactly zero on unvoiced rows.
pub fn loss_backward(preds: &Mat, targets_f0: &[f64], voiced: &[bool], alpha: f64) -> Result<Mat> {
    check_shapes(preds, targets_f0, voiced, alpha)?;
    let n = preds.rows();
    let n_voiced = voiced.iter().filter(|&&v| v).count();
    let mut grad = Mat::zeros(n, 2);
    for r in 0..n {
        let g = grad.row_mut(r);
        if voiced[r] && n_voiced > 0 {
            g[0] = 2.0 * (preds[(r, 0)] - targets_f0[r]) / n_voiced as f64;
        }
        if n > 0 {
            let y = if voiced[r] { 1.0 } else { 0.0 };
            g[1] = alpha * (sigmoid(preds[(r, 1)]) - y) / n as f64;
        }
    }
    Ok(grad)
}

/// Streams batches so a dataset-level loss can be computed with exactly the
/// same weighting as a single giant batch.
#[derive(Debug, Default)]
pub struct LossAccumulator {
    sq_sum: f64,
    n_voiced: usize,
    bce_sum: f64,
    n: usize,
}

impl LossAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_batch(&mut self, preds: &Mat, targets_f0: &[f64], voiced: &[bool]) {
        for r in 0..preds.rows() {
            if voiced[r] {
                let d = preds[(r, 0)] - targets_f0[r];
                self.sq_sum += d * d;
                self.n_voiced += 1;
            }
            let y = if voiced[r] { 1.0 } else { 0.0 };
            self.bce_sum += bce_with_logit(preds[(r, 1)], y);
            self.n += 1;
        }
    }

    pub fn finish(&self, alpha: f64) -> LossBreakdown {
        let mse_term = if self.n_voiced > 0 {
            self.sq_sum / self.n_voiced as f64
        } else {
            0.0
        };
        let bce_term = if self.n > 0 {
            self.bce_sum / self.n as f64
        } else {
            0.0
        };
        LossBreakdown {
            total: mse_term + alpha * bce_term,
            mse_term,
            bce_term,
            alpha,
            n_voiced: self.n_voiced,
        }
    }
}

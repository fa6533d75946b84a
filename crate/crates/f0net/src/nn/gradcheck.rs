//! Central finite-difference verification of the analytic gradients.

use crate::error::Result;
use crate::mat::Mat;
use crate::nn::backprop::backward;
use crate::nn::loss::{loss_backward, loss_forward};
use crate::nn::model::{forward, Activation, ForwardTrace, MlpModel, Mode};

/// Compares every parameter's analytic gradient of the joint loss against a
/// central finite difference with step `epsilon` and returns the worst
/// relative error. Runs in eval mode so the loss is deterministic.
///
/// Two standard guards keep the comparison meaningful:
/// - the error denominator is floored at 1e-2, so finite-difference roundoff
///   on near-zero gradients cannot dominate (exact 0-vs-0 agreement yields 0);
/// - with a rectifier activation, probes whose `+/- epsilon` evaluations land
///   on different sides of a unit's kink are excluded, because the central
///   difference is undefined across the non-differentiable point.
pub fn grad_check(
    model: &MlpModel,
    batch: &Mat,
    targets_f0: &[f64],
    voiced: &[bool],
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    let (preds, base_trace) = forward(model, batch, Mode::Eval, 0)?;
    let grad_preds = loss_backward(&preds, targets_f0, voiced, alpha)?;
    let analytic = backward(model, &base_trace, &grad_preds)?;

    let probe = |m: &MlpModel| -> Result<(f64, ForwardTrace)> {
        let (p, trace) = forward(m, batch, Mode::Eval, 0)?;
        Ok((loss_forward(&p, targets_f0, voiced, alpha)?.total, trace))
    };
    let kinked = model.config.activation == Activation::Relu && !model.config.hidden.is_empty();

    let mut scratch = model.clone();
    let mut worst = 0.0f64;
    let check = |scratch: &mut MlpModel,
                 li: usize,
                 k: usize,
                 is_bias: bool,
                 analytic_g: f64|
     -> Result<f64> {
        let orig = *param_mut(scratch, li, k, is_bias);
        *param_mut(scratch, li, k, is_bias) = orig + epsilon;
        let (plus, plus_trace) = probe(scratch)?;
        *param_mut(scratch, li, k, is_bias) = orig - epsilon;
        let (minus, minus_trace) = probe(scratch)?;
        *param_mut(scratch, li, k, is_bias) = orig;
        if kinked
            && (crosses_kink(&base_trace, &plus_trace, model)
                || crosses_kink(&base_trace, &minus_trace, model))
        {
            return Ok(0.0);
        }
        let numeric = (plus - minus) / (2.0 * epsilon);
        Ok(rel_error(analytic_g, numeric))
    };

    for li in 0..model.layers.len() {
        for k in 0..model.layers[li].weights.data().len() {
            let g = analytic.layers[li].weights.data()[k];
            worst = worst.max(check(&mut scratch, li, k, false, g)?);
        }
        for k in 0..model.layers[li].bias.len() {
            let g = analytic.layers[li].bias[k];
            worst = worst.max(check(&mut scratch, li, k, true, g)?);
        }
    }
    Ok(worst)
}

fn param_mut(m: &mut MlpModel, li: usize, k: usize, is_bias: bool) -> &mut f64 {
    if is_bias {
        &mut m.layers[li].bias[k]
    } else {
        &mut m.layers[li].weights.data_mut()[k]
    }
}

/// True when any hidden-layer pre-activation changed sign between traces.
fn crosses_kink(a: &ForwardTrace, b: &ForwardTrace, model: &MlpModel) -> bool {
    let n_hidden = model.config.hidden.len();
    for li in 0..n_hidden {
        for (x, y) in a.preacts[li].data().iter().zip(b.preacts[li].data()) {
            if (*x > 0.0) != (*y > 0.0) {
                return true;
            }
        }
    }
    false
}

#[inline]
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(1e-2)
}

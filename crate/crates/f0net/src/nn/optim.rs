//! Adaptive-moment optimizer with bias correction, plus plain SGD for tests.

use crate::error::{Error, Result};
use crate::nn::backprop::Gradients;
use crate::nn::model::MlpModel;

/// Per-parameter first/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl OptimizerState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(model: &MlpModel, lr: f64) -> Self {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.epsilon = epsilon;
        self
    }
}

fn check_finite(grads: &Gradients) -> Result<()> {
    for (li, layer) in grads.layers.iter().enumerate() {
        if !layer.weights.is_finite() {
            return Err(Error::NonFinite(format!("gradient of layer {li} weights")));
        }
        if !layer.bias.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of layer {li} bias")));
        }
    }
    Ok(())
}

/// One bias-corrected adaptive-moment step. Rejects non-finite gradients with
/// an error naming the offending parameter tensor.
pub fn optimizer_step(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    if grads.layers.len() != model.layers.len() {
        return Err(Error::Shape(format!(
            "gradients cover {} layers, model has {}",
            grads.layers.len(),
            model.layers.len()
        )));
    }
    for (li, (layer, grad)) in model.layers.iter().zip(&grads.layers).enumerate() {
        if layer.weights.rows() != grad.weights.rows()
            || layer.weights.cols() != grad.weights.cols()
            || layer.bias.len() != grad.bias.len()
        {
            return Err(Error::Shape(format!(
                "gradient shape mismatch at layer {li}"
            )));
        }
    }
    check_finite(grads)?;

    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (lr, b1, b2, eps) = (state.lr, state.beta1, state.beta2, state.epsilon);
    let update = |param: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *param -= lr * m_hat / (v_hat.sqrt() + eps);
    };

    for ((layer, grad), (ms, vs)) in model
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()))
    {
        let w = layer.weights.data_mut();
        let gw = grad.weights.data();
        let mw = ms.weights.data_mut();
        let vw = vs.weights.data_mut();
        for k in 0..w.len() {
            update(&mut w[k], &mut mw[k], &mut vw[k], gw[k]);
        }
        for k in 0..layer.bias.len() {
            update(
                &mut layer.bias[k],
                &mut ms.bias[k],
                &mut vs.bias[k],
                grad.bias[k],
            );
        }
    }
    debug_assert!(model.params_finite());
    Ok(())
}

/// `param -= lr * grad`, no state.
pub fn sgd_step(model: &mut MlpModel, grads: &Gradients, lr: f64) -> Result<()> {
    check_finite(grads)?;
    for (layer, grad) in model.layers.iter_mut().zip(&grads.layers) {
        for (w, g) in layer.weights.data_mut().iter_mut().zip(grad.weights.data()) {
            *w -= lr * g;
        }
        for (b, g) in layer.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{init_model, Activation, ModelConfig};

    fn tiny_model() -> MlpModel {
        init_model(
            &ModelConfig {
                input_dim: 1,
                hidden: vec![],
                activation: Activation::Relu,
                dropout_p: 0.0,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn first_step_matches_closed_form() {
        // After one step with fresh moments, m_hat = g and v_hat = g^2, so the
        // update is lr * g / (|g| + eps): magnitude ~ lr, direction -sign(g).
        let mut model = tiny_model();
        let w0 = model.layers[0].weights[(0, 0)];
        let mut state = OptimizerState::new(&model, 0.0007);
        let mut grads = Gradients::zeros_like(&model);
        let g = 0.3;
        grads.layers[0].weights[(0, 0)] = g;
        optimizer_step(&mut model, &grads, &mut state).unwrap();
        let delta = model.layers[0].weights[(0, 0)] - w0;
        let expected = -state.lr * g / (g.abs() + state.epsilon);
        assert!((delta - expected).abs() < 1e-15, "{delta} vs {expected}");
        assert!((delta.abs() - state.lr).abs() < 1e-8 * state.lr.max(1.0));
        assert!(delta < 0.0);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut model = init_model(
            &ModelConfig {
                input_dim: 3,
                hidden: vec![4],
                activation: Activation::Relu,
                dropout_p: 0.0,
            },
            9,
        )
        .unwrap();
        let before = model.clone();
        let mut state = OptimizerState::new(&model, 0.001);
        let grads = Gradients::zeros_like(&model);
        optimizer_step(&mut model, &grads, &mut state).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step, 1);
        // Moments stay zero too.
        assert!(state.m.layers[0].weights.data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn steps_are_bit_deterministic() {
        let run = || {
            let mut model = init_model(
                &ModelConfig {
                    input_dim: 2,
                    hidden: vec![3],
                    activation: Activation::Relu,
                    dropout_p: 0.0,
                },
                4,
            )
            .unwrap();
            let mut state = OptimizerState::new(&model, 0.01);
            let mut grads = Gradients::zeros_like(&model);
            for (k, g) in grads.layers[0].weights.data_mut().iter_mut().enumerate() {
                *g = (k as f64 - 2.5) * 0.1;
            }
            for _ in 0..5 {
                optimizer_step(&mut model, &grads, &mut state).unwrap();
            }
            model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut model = init_model(
            &ModelConfig {
                input_dim: 2,
                hidden: vec![3, 3],
                activation: Activation::Relu,
                dropout_p: 0.0,
            },
            4,
        )
        .unwrap();
        let mut state = OptimizerState::new(&model, 0.01);
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[1].bias[0] = f64::NAN;
        let err = optimizer_step(&mut model, &grads, &mut state).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("layer 1") && msg.contains("bias"), "{msg}");
    }

    #[test]
    fn sgd_is_a_plain_scaled_step() {
        let mut model = tiny_model();
        let w0 = model.layers[0].weights[(0, 0)];
        let mut grads = Gradients::zeros_like(&model);
        grads.layers[0].weights[(0, 0)] = 2.0;
        sgd_step(&mut model, &grads, 0.1).unwrap();
        assert!((model.layers[0].weights[(0, 0)] - (w0 - 0.2)).abs() < 1e-15);
    }
}

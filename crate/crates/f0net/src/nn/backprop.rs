//! Backpropagation through the traced forward pass.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::model::{activation_grad, ForwardTrace, MlpModel, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Mat::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in layer.weights.data_mut() {
                *w *= factor;
            }
            for b in &mut layer.bias {
                *b *= factor;
            }
        }
    }
}

/// Computes parameter gradients from a forward trace and the loss gradient at
/// the outputs. Dropout masks recorded in the trace are reused exactly.
pub fn backward(model: &MlpModel, trace: &ForwardTrace, grad_preds: &Mat) -> Result<Gradients> {
    let n_layers = model.layers.len();
    if trace.inputs.len() != n_layers || trace.preacts.len() != n_layers {
        return Err(Error::Shape(format!(
            "trace has {} layers, model has {n_layers}",
            trace.inputs.len()
        )));
    }
    if trace.mode == Mode::Train && model.config.dropout_p > 0.0 && trace.masks.len() != n_layers {
        return Err(Error::Shape("trace is missing dropout masks".into()));
    }
    let rows = trace.batch_rows;
    if grad_preds.rows() != rows || grad_preds.cols() != model.layers[n_layers - 1].out_dim() {
        return Err(Error::Shape(format!(
            "grad_preds is {}x{}, expected {rows}x{}",
            grad_preds.rows(),
            grad_preds.cols(),
            model.layers[n_layers - 1].out_dim()
        )));
    }
    for (li, layer) in model.layers.iter().enumerate() {
        if trace.inputs[li].cols() != layer.in_dim()
            || trace.preacts[li].cols() != layer.out_dim()
            || trace.inputs[li].rows() != rows
        {
            return Err(Error::Shape(format!(
                "trace layer {li} does not match model dimensions"
            )));
        }
    }

    let mut grads = Gradients::zeros_like(model);
    // Gradient w.r.t. the current layer's post-activation output.
    let mut grad_out = grad_preds.clone();

    for li in (0..n_layers).rev() {
        let layer = &model.layers[li];
        let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
        let last = li + 1 == n_layers;
        let preact = &trace.preacts[li];
        let input = &trace.inputs[li];
        let lg = &mut grads.layers[li];
        let mut grad_in = if li > 0 {
            Mat::zeros(rows, in_dim)
        } else {
            Mat::zeros(0, 0)
        };

        for r in 0..rows {
            let go = grad_out.row(r);
            let xr = input.row(r);
            for o in 0..out_dim {
                // Through the activation (hidden layers only)...
                let mut gz = if last {
                    go[o]
                } else {
                    go[o] * activation_grad(model.config.activation, preact[(r, o)])
                };
                // ...then through the dropout scale.
                if let Some(mask) = trace.masks.get(li) {
                    gz *= mask[(r, o)];
                }
                if gz == 0.0 {
                    continue;
                }
                lg.bias[o] += gz;
                let wg = lg.weights.row_mut(o);
                for (w, x) in wg.iter_mut().zip(xr) {
                    *w += gz * x;
                }
                if li > 0 {
                    let wrow = layer.weights.row(o);
                    let gi = grad_in.row_mut(r);
                    for (g, w) in gi.iter_mut().zip(wrow) {
                        *g += gz * w;
                    }
                }
            }
        }
        grad_out = grad_in;
    }
    Ok(grads)
}

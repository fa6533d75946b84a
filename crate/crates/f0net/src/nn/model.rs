//! Model definition, initialization, and the batched forward pass.
//!
//! Every layer is a linear map followed (in train mode) by inverted dropout;
//! hidden layers then apply the configured activation. The two output neurons
//! are emitted raw: column 0 is the normalized log-F0 prediction, column 1 the
//! voicing logit (sigmoid is applied only at inference).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// The network always has two output neurons: (normalized F0, voicing logit).
pub const OUTPUT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    fn grad(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Hidden layer widths; may be empty for a purely linear model.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub dropout_p: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 768,
            hidden: vec![256, 256, 256],
            activation: Activation::Relu,
            dropout_p: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Input dimension of each linear layer, in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, OUTPUT_DIM));
        dims
    }
}

/// One dense layer: weights `[out_dim x in_dim]` row-major plus a bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
}

impl MlpModel {
    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    pub fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

/// Initializes weights from `U(-sqrt(6/fan_in), +sqrt(6/fan_in))` and biases to
/// zero, deterministically for a given seed.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<MlpModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layer_dims()
        .into_iter()
        .map(|(in_dim, out_dim)| {
            let limit = (6.0 / in_dim as f64).sqrt();
            let mut weights = Mat::zeros(out_dim, in_dim);
            for w in weights.data_mut() {
                *w = rng.gen_range(-limit..limit);
            }
            LayerParams {
                weights,
                bias: vec![0.0; out_dim],
            }
        })
        .collect();
    Ok(MlpModel {
        config: config.clone(),
        layers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate state captured by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    /// Input to each linear layer (the batch itself for layer 0).
    pub inputs: Vec<Mat>,
    /// Post-dropout pre-activations of each layer.
    pub preacts: Vec<Mat>,
    /// Per-unit dropout scale factors (0 or 1/(1-p)); empty in eval mode.
    pub masks: Vec<Mat>,
    pub batch_rows: usize,
}

/// Runs the batch through the network. In train mode, inverted dropout
/// (scale 1/(1-p)) is applied after every linear layer so that eval mode needs
/// no rescaling; masks are drawn from `seed`.
pub fn forward(
    model: &MlpModel,
    batch: &Mat,
    mode: Mode,
    seed: u64,
) -> Result<(Mat, ForwardTrace)> {
    if batch.cols() != model.config.input_dim {
        return Err(Error::Shape(format!(
            "batch has {} columns, model expects {}",
            batch.cols(),
            model.config.input_dim
        )));
    }
    let p = model.config.dropout_p;
    let use_dropout = mode == Mode::Train && p > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep_scale = 1.0 / (1.0 - p);

    let n_layers = model.layers.len();
    let rows = batch.rows();
    let mut trace = ForwardTrace {
        mode,
        inputs: Vec::with_capacity(n_layers),
        preacts: Vec::with_capacity(n_layers),
        masks: Vec::new(),
        batch_rows: rows,
    };

    let mut x = batch.clone();
    for (li, layer) in model.layers.iter().enumerate() {
        let out_dim = layer.out_dim();
        let mut z = Mat::zeros(rows, out_dim);
        for r in 0..rows {
            let xr = x.row(r);
            let zr = z.row_mut(r);
            for (o, zv) in zr.iter_mut().enumerate() {
                let wrow = layer.weights.row(o);
                let mut acc = layer.bias[o];
                for (w, xv) in wrow.iter().zip(xr) {
                    acc += w * xv;
                }
                *zv = acc;
            }
        }
        if use_dropout {
            let mut mask = Mat::zeros(rows, out_dim);
            for (m, zv) in mask.data_mut().iter_mut().zip(z.data_mut()) {
                *m = if rng.gen::<f64>() < p {
                    0.0
                } else {
                    keep_scale
                };
                *zv *= *m;
            }
            trace.masks.push(mask);
        }
        trace.inputs.push(x);
        trace.preacts.push(z.clone());

        let last = li + 1 == n_layers;
        if !last {
            for v in z.data_mut() {
                *v = model.config.activation.apply(*v);
            }
        }
        x = z;
    }
    Ok((x, trace))
}

pub(crate) fn activation_grad(act: Activation, pre: f64) -> f64 {
    act.grad(pre)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(input: usize, hidden: &[usize]) -> ModelConfig {
        ModelConfig {
            input_dim: input,
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
            dropout_p: 0.0,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = config(6, &[4, 4, 4]);
        let a = init_model(&cfg, 7).unwrap();
        let b = init_model(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = init_model(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biases_start_at_zero() {
        let model = init_model(&config(6, &[4, 4]), 3).unwrap();
        for layer in &model.layers {
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn weights_respect_fan_in_bound() {
        let model = init_model(&config(768, &[256, 256, 256]), 1).unwrap();
        let limit = (6.0f64 / 768.0).sqrt();
        for &w in model.layers[0].weights.data() {
            assert!(w.abs() <= limit, "{w} exceeds {limit}");
        }
        // Each subsequent layer has its own fan-in bound.
        for layer in &model.layers[1..] {
            let lim = (6.0 / layer.in_dim() as f64).sqrt();
            assert!(layer.weights.data().iter().all(|w| w.abs() <= lim));
        }
    }

    #[test]
    fn zero_dimension_is_a_config_error() {
        assert!(init_model(&config(0, &[4]), 0).is_err());
        assert!(init_model(&config(4, &[0]), 0).is_err());
    }

    #[test]
    fn zero_weight_model_maps_to_zero() {
        let mut model = init_model(&config(3, &[4]), 0).unwrap();
        for layer in &mut model.layers {
            layer.weights.data_mut().fill(0.0);
        }
        let batch = Mat::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]);
        let (preds, _) = forward(&model, &batch, Mode::Eval, 0).unwrap();
        assert!(preds.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_two_layer_forward() {
        // 2-2-2 network, ReLU hidden, input [1, 2]:
        //   z1 = [0.5*1 - 0.25*2 + 0.1, 0.1*1 + 0.3*2 - 0.8] = [0.1, -0.1]
        //   a1 = [0.1, 0]
        //   out = [1*0.1 + 2*0 + 0.05, -1*0.1 + 0.5*0 + 0] = [0.15, -0.1]
        let cfg = config(2, &[2]);
        let mut model = init_model(&cfg, 0).unwrap();
        model.layers[0].weights = Mat::from_rows(&[vec![0.5, -0.25], vec![0.1, 0.3]]);
        model.layers[0].bias = vec![0.1, -0.8];
        model.layers[1].weights = Mat::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        model.layers[1].bias = vec![0.05, 0.0];
        let batch = Mat::from_rows(&[vec![1.0, 2.0]]);
        let (preds, _) = forward(&model, &batch, Mode::Eval, 0).unwrap();
        assert!((preds[(0, 0)] - 0.15).abs() < 1e-12);
        assert!((preds[(0, 1)] - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_ignores_dropout() {
        let mut cfg = config(5, &[8, 8]);
        cfg.dropout_p = 0.5;
        let model = init_model(&cfg, 2).unwrap();
        let mut plain = model.clone();
        plain.config.dropout_p = 0.0;
        let batch = Mat::from_rows(&[vec![0.3, -0.1, 0.7, 0.2, -0.9]]);
        let (a, trace_a) = forward(&model, &batch, Mode::Eval, 99).unwrap();
        let (b, _) = forward(&plain, &batch, Mode::Eval, 7).unwrap();
        assert_eq!(a, b);
        assert!(trace_a.masks.is_empty());
    }

    #[test]
    fn train_mode_dropout_is_seeded() {
        let mut cfg = config(5, &[16]);
        cfg.dropout_p = 0.4;
        let model = init_model(&cfg, 2).unwrap();
        let batch = Mat::from_rows(&[vec![0.3, -0.1, 0.7, 0.2, -0.9]]);
        let (a, _) = forward(&model, &batch, Mode::Train, 5).unwrap();
        let (b, _) = forward(&model, &batch, Mode::Train, 5).unwrap();
        let (c, _) = forward(&model, &batch, Mode::Train, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dropout_expectation_matches_eval_output() {
        // Inverted dropout is unbiased: averaging train-mode outputs over many
        // mask draws approaches the eval-mode output.
        let mut cfg = config(4, &[12]);
        cfg.dropout_p = 0.5;
        let model = init_model(&cfg, 13).unwrap();
        let batch = Mat::from_rows(&[vec![0.8, -0.4, 0.6, 1.2]]);
        let (eval_out, _) = forward(&model, &batch, Mode::Eval, 0).unwrap();
        let n = 20_000;
        let mut acc = [0.0f64; 2];
        for seed in 0..n {
            let (out, _) = forward(&model, &batch, Mode::Train, seed).unwrap();
            acc[0] += out[(0, 0)];
            acc[1] += out[(0, 1)];
        }
        for (k, &e) in eval_out.row(0).iter().enumerate() {
            let mean = acc[k] / n as f64;
            assert!(
                (mean - e).abs() <= 0.02 * e.abs().max(0.05),
                "head {k}: mean {mean} vs eval {e}"
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let model = init_model(&config(4, &[4]), 0).unwrap();
        let batch = Mat::zeros(2, 3);
        assert!(matches!(
            forward(&model, &batch, Mode::Eval, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn linear_model_without_hidden_layers() {
        let model = init_model(&config(3, &[]), 5).unwrap();
        assert_eq!(model.layers.len(), 1);
        let batch = Mat::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let (preds, trace) = forward(&model, &batch, Mode::Eval, 0).unwrap();
        assert_eq!(preds.cols(), OUTPUT_DIM);
        assert_eq!(trace.inputs.len(), 1);
    }

    #[test]
    fn trace_matches_architecture_and_batch() {
        let model = init_model(&config(6, &[4, 3]), 5).unwrap();
        let batch = Mat::zeros(7, 6);
        let (_, trace) = forward(&model, &batch, Mode::Eval, 0).unwrap();
        assert_eq!(trace.batch_rows, 7);
        assert_eq!(trace.inputs.len(), 3);
        assert_eq!(trace.preacts[0].cols(), 4);
        assert_eq!(trace.preacts[1].cols(), 3);
        assert_eq!(trace.preacts[2].cols(), 2);
    }
}

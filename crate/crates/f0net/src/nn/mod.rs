//! Dense feed-forward network with manual forward/backward passes, the joint
//! regression/voicing loss, an adaptive-moment optimizer, and a
//! finite-difference gradient verification harness.

mod backprop;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod serialize;

pub use backprop::{backward, Gradients, LayerGrads};
pub use gradcheck::grad_check;
pub use loss::{loss_backward, loss_forward, LossAccumulator, LossBreakdown};
pub use model::{
    forward, init_model, Activation, ForwardTrace, LayerParams, MlpModel, Mode, ModelConfig,
    OUTPUT_DIM,
};
pub use optim::{optimizer_step, sgd_step, OptimizerState};
pub use serialize::{read_model, write_model};

/// Numerically stable sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

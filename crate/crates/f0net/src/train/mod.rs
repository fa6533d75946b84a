//! Mini-batch training with validation, plateau learning-rate decay, and
//! early stopping.
//!
//! Per epoch: shuffle the training rows, run forward/loss/backward/step over
//! mini-batches, compute the full validation loss in eval mode, then apply the
//! LR scheduler followed by the early-stop scheduler. The parameters of the
//! best-validation epoch are restored into the returned bundle.

mod bundle;

pub use bundle::{bundle_bytes, history_csv, load_bundle, save_bundle, write_history_csv};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatMatrix, FrameMatrix};
use crate::dsp::{gate_output, F0Trajectory, NormStats};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    backward, forward, init_model, loss_backward, loss_forward, optimizer_step, sigmoid,
    LossAccumulator, MlpModel, Mode, ModelConfig, OptimizerState,
};

fn default_lr() -> f64 {
    0.0007
}
fn default_alpha() -> f64 {
    0.00022
}
fn default_batch() -> usize {
    1024
}
fn default_max_epochs() -> usize {
    200
}
fn default_stop_patience() -> usize {
    10
}
fn default_lr_patience() -> usize {
    5
}
fn default_lr_factor() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Weight of the voicing BCE term in the joint loss.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub dropout_p: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    #[serde(default = "default_stop_patience")]
    pub early_stop_patience: usize,
    /// Multiply the learning rate by `lr_factor` after this many stale epochs.
    #[serde(default = "default_lr_patience")]
    pub lr_patience: usize,
    #[serde(default = "default_lr_factor")]
    pub lr_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: default_lr(),
            alpha: default_alpha(),
            dropout_p: 0.0,
            batch_size: default_batch(),
            max_epochs: default_max_epochs(),
            early_stop_patience: default_stop_patience(),
            lr_patience: default_lr_patience(),
            lr_factor: default_lr_factor(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.early_stop_patience == 0 || self.lr_patience == 0 {
            return Err(Error::Config("patience values must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.lr_factor) || self.lr_factor <= 0.0 {
            return Err(Error::Config(format!(
                "lr_factor must be in (0, 1), got {}",
                self.lr_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    /// 1-based epoch index.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate in effect during this epoch's updates.
    pub current_lr: f64,
    pub stale_epochs_early_stop: usize,
    pub stale_epochs_lr: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauAction {
    None,
    ReduceLr,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauKind {
    /// Fires `ReduceLr` and re-arms (stale count resets).
    ReduceLr,
    /// Fires `Stop` and latches permanently.
    EarlyStop,
}

/// Tracks epochs without strict validation-loss improvement and fires its
/// action when the stale count reaches the patience.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub best_val: f64,
    pub stale_count: usize,
    pub patience: usize,
    kind: PlateauKind,
    stopped: bool,
}

impl PlateauState {
    pub fn new(kind: PlateauKind, patience: usize) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        Ok(PlateauState {
            best_val: f64::INFINITY,
            stale_count: 0,
            patience,
            kind,
            stopped: false,
        })
    }

    /// Feeds one validation loss. Strictly smaller than the best seen so far
    /// counts as improvement; anything else (including equality) is stale.
    pub fn step(&mut self, val_loss: f64) -> Result<PlateauAction> {
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss}")));
        }
        if self.stopped {
            return Ok(PlateauAction::Stop);
        }
        if val_loss < self.best_val {
            self.best_val = val_loss;
            self.stale_count = 0;
            return Ok(PlateauAction::None);
        }
        self.stale_count += 1;
        if self.stale_count >= self.patience {
            match self.kind {
                PlateauKind::ReduceLr => {
                    self.stale_count = 0;
                    Ok(PlateauAction::ReduceLr)
                }
                PlateauKind::EarlyStop => {
                    self.stopped = true;
                    Ok(PlateauAction::Stop)
                }
            }
        } else {
            Ok(PlateauAction::None)
        }
    }
}

/// A trained model with everything needed for inference: parameters, the
/// normalization statistics, and the full training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBundle {
    pub model: MlpModel,
    pub stats: NormStats,
    pub train_config: TrainConfig,
}

fn gather_batch(frames: &FrameMatrix, rows: &[usize]) -> (Mat, Vec<f64>, Vec<bool>) {
    let mut batch = Mat::zeros(rows.len(), frames.input_dim());
    let mut targets = Vec::with_capacity(rows.len());
    let mut voiced = Vec::with_capacity(rows.len());
    for (i, &r) in rows.iter().enumerate() {
        batch.row_mut(i).copy_from_slice(frames.inputs.row(r));
        targets.push(frames.targets_f0[r]);
        voiced.push(frames.voiced[r]);
    }
    (batch, targets, voiced)
}

/// Full-dataset loss in eval mode. Row order is fixed, so the result is
/// bit-identical across calls regardless of internal batching.
pub fn validation_loss(model: &MlpModel, frames: &FrameMatrix, alpha: f64) -> Result<f64> {
    let mut acc = LossAccumulator::new();
    let n = frames.n_rows();
    let chunk = 4096;
    let mut start = 0;
    while start < n {
        let rows: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let (batch, targets, voiced) = gather_batch(frames, &rows);
        let (preds, _) = forward(model, &batch, Mode::Eval, 0)?;
        acc.add_batch(&preds, &targets, &voiced);
        start += chunk;
    }
    Ok(acc.finish(alpha).total)
}

/// Trains on pre-split train/validation frame matrices and returns the bundle
/// holding the best-validation parameters plus the per-epoch history.
pub fn train(
    train_frames: &FrameMatrix,
    val_frames: &FrameMatrix,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    stats: &NormStats,
) -> Result<(TrainedBundle, Vec<EpochReport>)> {
    cfg.validate()?;
    if train_frames.n_rows() == 0 || val_frames.n_rows() == 0 {
        return Err(Error::Config(
            "train and validation sets must be nonempty".into(),
        ));
    }
    if train_frames.input_dim() != model_cfg.input_dim {
        return Err(Error::Shape(format!(
            "frames have {} input columns, model expects {}",
            train_frames.input_dim(),
            model_cfg.input_dim
        )));
    }

    // The tuned dropout probability drives the network.
    let mut net_cfg = model_cfg.clone();
    net_cfg.dropout_p = cfg.dropout_p;

    let mut model = init_model(&net_cfg, cfg.seed)?;
    let mut opt = OptimizerState::new(&model, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lr_sched = PlateauState::new(PlateauKind::ReduceLr, cfg.lr_patience)?;
    let mut stop_sched = PlateauState::new(PlateauKind::EarlyStop, cfg.early_stop_patience)?;

    let n_train = train_frames.n_rows();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, MlpModel)> = None;

    for epoch in 1..=cfg.max_epochs {
        let epoch_lr = opt.lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, rows) in order.chunks(cfg.batch_size).enumerate() {
            let (batch, targets, voiced) = gather_batch(train_frames, rows);
            let dropout_seed = rng.gen::<u64>();
            let (preds, trace) = forward(&model, &batch, Mode::Train, dropout_seed)?;
            let loss = loss_forward(&preds, &targets, &voiced, cfg.alpha)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {bi}: {}",
                    loss.total
                )));
            }
            loss_sum += loss.total * rows.len() as f64;
            let grad_preds = loss_backward(&preds, &targets, &voiced, cfg.alpha)?;
            let grads = backward(&model, &trace, &grad_preds)?;
            optimizer_step(&mut model, &grads, &mut opt)?;
        }
        let train_loss = loss_sum / n_train as f64;
        let val_loss = validation_loss(&model, val_frames, cfg.alpha)?;

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.clone()));
        }

        // LR reduction is applied first; early stop latches afterwards.
        let lr_action = lr_sched.step(val_loss)?;
        if lr_action == PlateauAction::ReduceLr {
            opt.lr *= cfg.lr_factor;
        }
        let stop_action = stop_sched.step(val_loss)?;

        history.push(EpochReport {
            epoch,
            train_loss,
            val_loss,
            current_lr: epoch_lr,
            stale_epochs_early_stop: stop_sched.stale_count,
            stale_epochs_lr: lr_sched.stale_count,
        });

        if stop_action == PlateauAction::Stop {
            break;
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((
        TrainedBundle {
            model: best_model,
            stats: *stats,
            train_config: cfg.clone(),
        },
        history,
    ))
}

/// Frame-wise inference for one utterance: forward in eval mode, sigmoid on
/// the voicing logit, then the 0.5 gate back to Hz.
pub fn predict_utterance(
    bundle: &TrainedBundle,
    bn: &FeatMatrix,
    xvec: &[f32],
) -> Result<F0Trajectory> {
    let dim = bn.dim() + xvec.len();
    if dim != bundle.model.config.input_dim {
        return Err(Error::Shape(format!(
            "features give {dim} inputs, model expects {}",
            bundle.model.config.input_dim
        )));
    }
    let t = bn.n_frames();
    let mut batch = Mat::zeros(t, dim);
    for r in 0..t {
        let dst = batch.row_mut(r);
        for (d, &v) in bn.frame(r).iter().enumerate() {
            dst[d] = v as f64;
        }
        for (d, &v) in xvec.iter().enumerate() {
            dst[bn.dim() + d] = v as f64;
        }
    }
    let (preds, _) = forward(&bundle.model, &batch, Mode::Eval, 0)?;
    let values = (0..t)
        .map(|r| {
            let prob = sigmoid(preds[(r, 1)]);
            gate_output(preds[(r, 0)], prob, &bundle.stats)
        })
        .collect();
    Ok(F0Trajectory::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble_frames, split_frames, FeatMatrix, UtteranceRecord};
    use crate::nn::Activation;

    fn scripted(kind: PlateauKind, patience: usize, losses: &[f64]) -> Vec<PlateauAction> {
        let mut state = PlateauState::new(kind, patience).unwrap();
        losses.iter().map(|&l| state.step(l).unwrap()).collect()
    }

    #[test]
    fn monotone_improvement_never_fires() {
        let actions = scripted(PlateauKind::ReduceLr, 5, &[1.0, 0.9, 0.8]);
        assert!(actions.iter().all(|&a| a == PlateauAction::None));
    }

    #[test]
    fn lr_reduction_fires_exactly_on_the_fifth_stale_epoch() {
        let losses = [0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let actions = scripted(PlateauKind::ReduceLr, 5, &losses);
        assert_eq!(actions[..5], [PlateauAction::None; 5]);
        assert_eq!(actions[5], PlateauAction::ReduceLr);
        // The counter re-arms: one more stale epoch does not fire again.
        assert_eq!(actions[6], PlateauAction::None);
    }

    #[test]
    fn early_stop_fires_exactly_on_the_tenth_stale_epoch() {
        let mut losses = vec![0.5];
        losses.extend(std::iter::repeat_n(0.6, 10));
        let actions = scripted(PlateauKind::EarlyStop, 10, &losses);
        assert!(actions[..10].iter().all(|&a| a == PlateauAction::None));
        assert_eq!(actions[10], PlateauAction::Stop);
    }

    #[test]
    fn improvement_resets_the_stale_count() {
        // 4 stale, improve, 4 stale: never fires with patience 5.
        let losses = [1.0, 1.1, 1.1, 1.1, 1.1, 0.9, 1.0, 1.0, 1.0, 1.0];
        let actions = scripted(PlateauKind::ReduceLr, 5, &losses);
        assert!(actions.iter().all(|&a| a == PlateauAction::None));
    }

    #[test]
    fn equality_is_not_improvement() {
        let losses = [1.0, 1.0, 1.0, 1.0];
        let actions = scripted(PlateauKind::EarlyStop, 3, &losses);
        assert_eq!(
            actions,
            vec![
                PlateauAction::None,
                PlateauAction::None,
                PlateauAction::None,
                PlateauAction::Stop
            ]
        );
    }

    #[test]
    fn early_stop_latches() {
        let mut state = PlateauState::new(PlateauKind::EarlyStop, 2).unwrap();
        state.step(1.0).unwrap();
        state.step(1.5).unwrap();
        assert_eq!(state.step(1.5).unwrap(), PlateauAction::Stop);
        // Even a new best cannot un-latch it.
        assert_eq!(state.step(0.1).unwrap(), PlateauAction::Stop);
    }

    #[test]
    fn nan_loss_is_rejected() {
        let mut state = PlateauState::new(PlateauKind::ReduceLr, 3).unwrap();
        assert!(state.step(f64::NAN).is_err());
    }

    fn linear_task_frames(seed: u64) -> (FrameMatrix, FrameMatrix, NormStats) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 6;
        let n = 400;
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let stats = NormStats::new(150f64.ln(), 0.5);
        let mut bn = Vec::with_capacity(n * d);
        let mut f0 = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
            // Invert the normalization so the assembled target is exactly y.
            f0.push((stats.mean_log + stats.std_log * y).exp());
            bn.extend(x.iter().map(|&v| v as f32));
        }
        let record = UtteranceRecord {
            utt_id: "lin".into(),
            speaker_id: "s".into(),
            bn: FeatMatrix::new(d, bn).unwrap(),
            xvec: vec![1.0, -1.0],
            f0: F0Trajectory::from_values(f0),
        };
        let frames = assemble_frames(&[record], &stats).unwrap();
        let (train, val) = split_frames(&frames, 0.10, seed).unwrap();
        (train, val, stats)
    }

    fn linear_task_configs() -> (ModelConfig, TrainConfig) {
        (
            ModelConfig {
                input_dim: 8,
                hidden: vec![16, 16],
                activation: Activation::Relu,
                dropout_p: 0.0,
            },
            TrainConfig {
                lr: 0.005,
                batch_size: 64,
                max_epochs: 120,
                seed: 7,
                ..TrainConfig::default()
            },
        )
    }

    #[test]
    fn realizable_linear_task_is_learned() {
        let (train_f, val_f, stats) = linear_task_frames(11);
        let (model_cfg, cfg) = linear_task_configs();
        let (bundle, history) = train(&train_f, &val_f, &model_cfg, &cfg, &stats).unwrap();
        let final_val = history.last().unwrap().val_loss;
        let best_val = history
            .iter()
            .map(|h| h.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert!(
            best_val < 1e-3,
            "best val loss {best_val} (final {final_val})"
        );
        // Best-epoch restoration: the bundle evaluates to exactly that minimum.
        let restored = validation_loss(&bundle.model, &val_f, cfg.alpha).unwrap();
        assert_eq!(restored, best_val);
    }

    #[test]
    fn single_epoch_run_has_one_report() {
        let (train_f, val_f, stats) = linear_task_frames(13);
        let (model_cfg, mut cfg) = linear_task_configs();
        cfg.max_epochs = 1;
        let (_, history) = train(&train_f, &val_f, &model_cfg, &cfg, &stats).unwrap();
        assert_eq!(history.len(), 1);
        assert_eq!(history[0].epoch, 1);
        assert_eq!(history[0].current_lr, cfg.lr);
        assert_eq!(history[0].stale_epochs_lr, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let (train_f, val_f, stats) = linear_task_frames(17);
            let (model_cfg, mut cfg) = linear_task_configs();
            cfg.max_epochs = 12;
            train(&train_f, &val_f, &model_cfg, &cfg, &stats).unwrap()
        };
        let (b1, h1) = run();
        let (b2, h2) = run();
        assert_eq!(h1, h2);
        let mut bytes1 = Vec::new();
        crate::nn::write_model(&mut bytes1, &b1.model, &b1.stats);
        let mut bytes2 = Vec::new();
        crate::nn::write_model(&mut bytes2, &b2.model, &b2.stats);
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn lr_sequence_is_non_increasing_powers_of_the_factor() {
        let (train_f, val_f, stats) = linear_task_frames(19);
        let (model_cfg, mut cfg) = linear_task_configs();
        cfg.max_epochs = 60;
        cfg.lr_patience = 2;
        cfg.early_stop_patience = 8;
        let (_, history) = train(&train_f, &val_f, &model_cfg, &cfg, &stats).unwrap();
        let mut prev = f64::INFINITY;
        for h in &history {
            assert!(h.current_lr <= prev);
            prev = h.current_lr;
            let k = (h.current_lr.ln() - cfg.lr.ln()) / cfg.lr_factor.ln();
            assert!(
                (k - k.round()).abs() < 1e-9,
                "lr {} is not lr * factor^k",
                h.current_lr
            );
        }
    }

    #[test]
    fn early_stop_fires_within_patience_of_the_best_epoch() {
        let (train_f, val_f, stats) = linear_task_frames(23);
        let (model_cfg, mut cfg) = linear_task_configs();
        cfg.max_epochs = 200;
        let (_, history) = train(&train_f, &val_f, &model_cfg, &cfg, &stats).unwrap();
        if history.len() < cfg.max_epochs {
            let best_epoch = history
                .iter()
                .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
                .unwrap()
                .epoch;
            assert!(history.len() <= best_epoch + cfg.early_stop_patience);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (train_f, val_f, stats) = linear_task_frames(29);
        let (model_cfg, mut cfg) = linear_task_configs();
        cfg.lr = 0.0;
        assert!(train(&train_f, &val_f, &model_cfg, &cfg, &stats).is_err());
        let (_, mut cfg) = linear_task_configs();
        cfg.lr_factor = 1.0;
        assert!(train(&train_f, &val_f, &model_cfg, &cfg, &stats).is_err());
    }

    fn forced_bundle(f0_weight_on_input: bool, logit_bias: f64) -> TrainedBundle {
        // A 2-input linear model with hand-set weights for gating tests.
        let cfg = ModelConfig {
            input_dim: 2,
            hidden: vec![],
            activation: Activation::Relu,
            dropout_p: 0.0,
        };
        let mut model = init_model(&cfg, 0).unwrap();
        model.layers[0].weights.data_mut().fill(0.0);
        if f0_weight_on_input {
            model.layers[0].weights[(0, 0)] = 1.0;
        }
        model.layers[0].bias = vec![0.0, logit_bias];
        TrainedBundle {
            model,
            stats: NormStats::new(150f64.ln(), 0.5),
            train_config: TrainConfig::default(),
        }
    }

    #[test]
    fn empty_utterance_predicts_an_empty_trajectory() {
        let bundle = forced_bundle(false, 5.0);
        let bn = FeatMatrix::new(1, vec![]).unwrap();
        let out = predict_utterance(&bundle, &bn, &[0.0]).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn negative_logit_gates_every_frame_to_unvoiced() {
        let bundle = forced_bundle(true, -5.0);
        let bn = FeatMatrix::new(1, vec![0.5, -0.5, 1.0]).unwrap();
        let out = predict_utterance(&bundle, &bn, &[0.0]).unwrap();
        assert_eq!(out.values, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn positive_logit_passes_denormalized_predictions() {
        let bundle = forced_bundle(false, 5.0);
        let bn = FeatMatrix::new(1, vec![0.0]).unwrap();
        let out = predict_utterance(&bundle, &bn, &[0.0]).unwrap();
        // pred_norm 0 denormalizes to the stats mean.
        assert!((out.values[0] - 150.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_dim_mismatch_is_a_shape_error() {
        let bundle = forced_bundle(false, 0.0);
        let bn = FeatMatrix::new(2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            predict_utterance(&bundle, &bn, &[0.0, 0.0]),
            Err(Error::Shape(_))
        ));
    }
}

//! Frame-wise F0 trajectory synthesis.
//!
//! A small, self-contained toolkit that learns to regress fundamental-frequency
//! trajectories frame by frame from concatenated linguistic (bottleneck) features
//! and utterance-level speaker embeddings. The network is a plain dense MLP with
//! two output heads — a normalized log-F0 value and a voicing logit — trained
//! with a joint MSE + weighted BCE loss, hand-rolled backpropagation, and an
//! adaptive-moment optimizer. Everything is deterministic under explicit seeds.
//!
//! Ground-truth pitch for audio comes from a cumulative-mean-normalized
//! difference-function tracker ([`dsp::extract_f0`]); synthetic corpora with
//! controllable speaker registers make the cross-embedding swap analysis
//! reproducible at desk scale ([`data::gen_synthetic`]).

pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod io_util;
pub mod mat;
pub mod nn;
pub mod train;
pub mod tuner;

pub use error::{Error, Result};
pub use mat::Mat;

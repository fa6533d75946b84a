//! Corpus records, frame-level dataset assembly, and train/validation splits.

mod corpus;
mod synth;

pub use corpus::{load_corpus, load_corpus_csv, save_corpus, CORPUS_MAGIC};
pub use synth::{gen_synthetic, SyntheticSpec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{normalize, F0Trajectory, NormStats};
use crate::error::{Error, Result};
use crate::mat::Mat;

/// Frame-level features, row-major `[T x d]`, kept at file precision (f32).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatMatrix {
    d: usize,
    data: Vec<f32>,
}

impl FeatMatrix {
    pub fn new(d: usize, data: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("feature dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "buffer of {} floats is not a multiple of dim {d}",
                data.len()
            )));
        }
        Ok(FeatMatrix { d, data })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// One utterance: frame-aligned linguistic features, an utterance-level
/// speaker embedding, and the ground-truth F0 trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub bn: FeatMatrix,
    pub xvec: Vec<f32>,
    pub f0: F0Trajectory,
}

impl UtteranceRecord {
    pub fn n_frames(&self) -> usize {
        self.bn.n_frames()
    }
}

/// The "tall matrix": one row per frame across all utterances. Inputs are
/// `[bn frame || broadcast xvec]`; voiced rows carry normalized log-F0
/// targets, unvoiced rows a `0.0` placeholder that the masked loss never reads.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub inputs: Mat,
    pub targets_f0: Vec<f64>,
    pub voiced: Vec<bool>,
    utt_ids: Vec<String>,
    /// Per row: (index into `utt_ids`, frame index within the utterance).
    origin: Vec<(u32, u32)>,
}

impl FrameMatrix {
    pub fn n_rows(&self) -> usize {
        self.inputs.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn provenance(&self, row: usize) -> (&str, usize) {
        let (u, t) = self.origin[row];
        (&self.utt_ids[u as usize], t as usize)
    }

    /// New matrix containing exactly the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> FrameMatrix {
        let mut inputs = Mat::zeros(rows.len(), self.inputs.cols());
        let mut targets = Vec::with_capacity(rows.len());
        let mut voiced = Vec::with_capacity(rows.len());
        let mut origin = Vec::with_capacity(rows.len());
        for (i, &r) in rows.iter().enumerate() {
            inputs.row_mut(i).copy_from_slice(self.inputs.row(r));
            targets.push(self.targets_f0[r]);
            voiced.push(self.voiced[r]);
            origin.push(self.origin[r]);
        }
        FrameMatrix {
            inputs,
            targets_f0: targets,
            voiced,
            utt_ids: self.utt_ids.clone(),
            origin,
        }
    }
}

/// Concatenates all utterances into a [`FrameMatrix`] in corpus order, with
/// each utterance's x-vector repeated on every one of its rows.
pub fn assemble_frames(utterances: &[UtteranceRecord], stats: &NormStats) -> Result<FrameMatrix> {
    if utterances.is_empty() {
        return Err(Error::Config("cannot assemble an empty corpus".into()));
    }
    let d_bn = utterances[0].bn.dim();
    let d_xv = utterances[0].xvec.len();
    let mut total = 0usize;
    for u in utterances {
        if u.bn.dim() != d_bn || u.xvec.len() != d_xv {
            return Err(Error::Shape(format!(
                "utterance {}: feature dims {}x{} differ from corpus dims {d_bn}x{d_xv}",
                u.utt_id,
                u.bn.dim(),
                u.xvec.len()
            )));
        }
        if u.bn.n_frames() != u.f0.len() {
            return Err(Error::Shape(format!(
                "utterance {}: {} feature frames but {} F0 frames",
                u.utt_id,
                u.bn.n_frames(),
                u.f0.len()
            )));
        }
        total += u.n_frames();
    }

    let dim = d_bn + d_xv;
    let mut inputs = Mat::zeros(total, dim);
    let mut targets = Vec::with_capacity(total);
    let mut voiced = Vec::with_capacity(total);
    let mut utt_ids = Vec::with_capacity(utterances.len());
    let mut origin = Vec::with_capacity(total);

    let mut row = 0;
    for (ui, u) in utterances.iter().enumerate() {
        utt_ids.push(u.utt_id.clone());
        for t in 0..u.n_frames() {
            let dst = inputs.row_mut(row);
            for (d, &v) in u.bn.frame(t).iter().enumerate() {
                dst[d] = v as f64;
            }
            for (d, &v) in u.xvec.iter().enumerate() {
                dst[d_bn + d] = v as f64;
            }
            let hz = u.f0.values[t];
            if hz > 0.0 {
                targets.push(normalize(hz, stats)?);
                voiced.push(true);
            } else {
                targets.push(0.0);
                voiced.push(false);
            }
            origin.push((ui as u32, t as u32));
            row += 1;
        }
    }
    Ok(FrameMatrix {
        inputs,
        targets_f0: targets,
        voiced,
        utt_ids,
        origin,
    })
}

/// Uniform random row-level split without replacement. The validation side
/// gets `round(val_fraction * N)` rows; both sides keep corpus row order.
pub fn split_frames(
    frames: &FrameMatrix,
    val_fraction: f64,
    seed: u64,
) -> Result<(FrameMatrix, FrameMatrix)> {
    let n = frames.n_rows();
    if n < 10 {
        return Err(Error::Config(format!(
            "need at least 10 frames to split, got {n}"
        )));
    }
    if !(0.0..1.0).contains(&val_fraction) || val_fraction <= 0.0 {
        return Err(Error::Config(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let n_val = (val_fraction * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut val_rows = idx[..n_val].to_vec();
    let mut train_rows = idx[n_val..].to_vec();
    val_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok((frames.select(&train_rows), frames.select(&val_rows)))
}

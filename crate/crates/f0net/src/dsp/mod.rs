//! Pitch extraction, log-domain normalization, and voiced gating.

mod norm;
mod wav;
mod yin;

pub use norm::{compute_norm_stats, denormalize, gate_output, normalize, NormStats, STD_LOG_FLOOR};
pub use wav::read_wav;
pub use yin::{extract_f0, TrackerConfig};

use crate::error::{Error, Result};

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample_rate must be > 0".into()));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }
}

/// Per-frame F0 in Hz; `0.0` encodes an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Trajectory {
    pub values: Vec<f64>,
    /// Seconds between frame starts.
    pub hop: f64,
    /// Analysis window length in seconds.
    pub window: f64,
}

pub const DEFAULT_HOP_S: f64 = 0.010;
pub const DEFAULT_WINDOW_S: f64 = 0.025;

impl F0Trajectory {
    pub fn new(values: Vec<f64>, hop: f64, window: f64) -> Result<Self> {
        if hop <= 0.0 || window <= 0.0 {
            return Err(Error::Config("hop and window must be > 0".into()));
        }
        Ok(F0Trajectory {
            values,
            hop,
            window,
        })
    }

    /// Default 10 ms hop / 25 ms window framing.
    pub fn from_values(values: Vec<f64>) -> Self {
        F0Trajectory {
            values,
            hop: DEFAULT_HOP_S,
            window: DEFAULT_WINDOW_S,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn is_voiced(&self, frame: usize) -> bool {
        self.values[frame] > 0.0
    }

    pub fn voiced_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Mean F0 over voiced frames, or `None` when every frame is unvoiced.
    pub fn voiced_mean(&self) -> Option<f64> {
        let n = self.voiced_count();
        if n == 0 {
            return None;
        }
        Some(self.values.iter().filter(|&&v| v > 0.0).sum::<f64>() / n as f64)
    }

    /// `frame_index,time_s,f0_hz` rows; unvoiced frames carry `0.0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,time_s,f0_hz\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{:.3},{}\n", i, i as f64 * self.hop, v));
        }
        out
    }
}

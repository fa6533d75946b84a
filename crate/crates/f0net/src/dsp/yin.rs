//! Pitch tracking with the cumulative-mean-normalized difference function.
//!
//! Per frame: compute the difference function
//! `d(tau) = sum_j (x[j] - x[j+tau])^2` inside the analysis window, normalize
//! it by its running mean (`d'(0) = 1`, `d'(tau) = d(tau) * tau / sum d(1..=tau)`),
//! take the first lag where `d'` dips below the threshold, descend to the local
//! minimum, and refine the lag with parabolic interpolation. Frames with no dip
//! below the threshold, or with RMS below the silence floor, are unvoiced.
//!
//! This is the ground-truth oracle for training targets; it is meant for clean
//! synthetic material, not for noise-robust tracking.

use crate::dsp::{AudioBuffer, F0Trajectory, DEFAULT_HOP_S, DEFAULT_WINDOW_S};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct TrackerConfig {
    pub f_min: f64,
    pub f_max: f64,
    /// Absolute threshold on the normalized difference function.
    pub threshold: f64,
    pub hop_s: f64,
    pub window_s: f64,
    /// Frames with RMS below this are unvoiced without further analysis.
    pub silence_rms: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            f_min: 60.0,
            f_max: 400.0,
            threshold: 0.15,
            hop_s: DEFAULT_HOP_S,
            window_s: DEFAULT_WINDOW_S,
            silence_rms: 1e-4,
        }
    }
}

impl TrackerConfig {
    fn validate(&self, sample_rate: u32) -> Result<(usize, usize, usize, usize)> {
        if self.f_min <= 0.0 || self.f_min >= self.f_max {
            return Err(Error::Config(format!(
                "require 0 < f_min < f_max, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        if self.hop_s <= 0.0 || self.window_s <= 0.0 {
            return Err(Error::Config("hop and window must be > 0".into()));
        }
        let rate = sample_rate as f64;
        let window = (self.window_s * rate).round() as usize;
        let hop = (self.hop_s * rate).round() as usize;
        let tau_min = (rate / self.f_max).ceil() as usize;
        let tau_max = (rate / self.f_min).floor() as usize;
        if hop == 0 || window == 0 {
            return Err(Error::Config("hop/window round to zero samples".into()));
        }
        if tau_max >= window {
            return Err(Error::Config(format!(
                "window of {window} samples is too short for f_min {} Hz (needs > {tau_max})",
                self.f_min
            )));
        }
        if tau_min < 1 {
            return Err(Error::Config(format!(
                "f_max {} exceeds Nyquist",
                self.f_max
            )));
        }
        Ok((window, hop, tau_min, tau_max))
    }
}

/// Extracts a per-frame F0 trajectory; unvoiced frames are `0.0`.
pub fn extract_f0(audio: &AudioBuffer, cfg: &TrackerConfig) -> Result<F0Trajectory> {
    let (window, hop, tau_min, tau_max) = cfg.validate(audio.sample_rate)?;
    if audio.samples.len() < window {
        return Err(Error::Config(format!(
            "audio of {} samples is shorter than one {window}-sample window",
            audio.samples.len()
        )));
    }
    let rate = audio.sample_rate as f64;
    let n_frames = (audio.samples.len() - window) / hop + 1;
    let mut values = Vec::with_capacity(n_frames);
    let mut diff = vec![0.0f64; tau_max + 1];
    let mut cmnd = vec![0.0f64; tau_max + 1];

    for frame_idx in 0..n_frames {
        let frame = &audio.samples[frame_idx * hop..frame_idx * hop + window];
        values.push(frame_f0(
            frame, rate, cfg, tau_min, tau_max, &mut diff, &mut cmnd,
        ));
    }
    F0Trajectory::new(values, hop as f64 / rate, window as f64 / rate)
}

fn frame_f0(
    frame: &[f64],
    rate: f64,
    cfg: &TrackerConfig,
    tau_min: usize,
    tau_max: usize,
    diff: &mut [f64],
    cmnd: &mut [f64],
) -> f64 {
    let rms = (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt();
    if rms < cfg.silence_rms {
        return 0.0;
    }

    // Difference function over all lags up to tau_max, inside the window.
    for tau in 1..=tau_max {
        let mut acc = 0.0;
        for j in 0..frame.len() - tau {
            let d = frame[j] - frame[j + tau];
            acc += d * d;
        }
        diff[tau] = acc;
    }

    // Cumulative mean normalization.
    cmnd[0] = 1.0;
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += diff[tau];
        cmnd[tau] = if running > 0.0 {
            diff[tau] * tau as f64 / running
        } else {
            1.0
        };
    }

    // First dip below threshold within the allowed lag range, then descend to
    // the local minimum before interpolating.
    let mut tau = tau_min;
    while tau <= tau_max && cmnd[tau] >= cfg.threshold {
        tau += 1;
    }
    if tau > tau_max {
        return 0.0;
    }
    while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
        tau += 1;
    }

    let refined = parabolic_refine(cmnd, tau, tau_max);
    (rate / refined).clamp(cfg.f_min, cfg.f_max)
}

/// Refines an integer lag by fitting a parabola through its neighbors.
fn parabolic_refine(cmnd: &[f64], tau: usize, tau_max: usize) -> f64 {
    if tau == 0 || tau + 1 > tau_max {
        return tau as f64;
    }
    let (s0, s1, s2) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
    let denom = 2.0 * s1 - s0 - s2;
    if denom == 0.0 {
        return tau as f64;
    }
    let delta = (s2 - s0) / (2.0 * denom);
    // A well-formed minimum keeps the correction within half a sample.
    if delta.abs() > 1.0 {
        return tau as f64;
    }
    tau as f64 + delta
}

//! Synthetic corpus generator.
//!
//! Two speaker registers (low/high) with per-speaker mean F0, smooth
//! semitone contours from a few low-frequency sinusoids, alternating
//! voiced/unvoiced runs, and features that make the task realizable: the
//! linguistic (bn) channels carry the contour and the voicing flag, and one
//! block of the speaker embedding linearly encodes the log register so a
//! small network can provably recover it. The remaining embedding
//! coordinates are per-speaker distractors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FeatMatrix, UtteranceRecord};
use crate::dsp::{F0Trajectory, DEFAULT_HOP_S, DEFAULT_WINDOW_S};
use crate::error::{Error, Result};

/// Reference frequency for the embedding's register code: the code stored in
/// the x-vector block is `ln(mu_speaker / 170)`.
pub const XVEC_REGISTER_REF_HZ: f64 = 170.0;

/// Number of leading x-vector coordinates carrying the register code.
pub const XVEC_REGISTER_BLOCK: usize = 4;

fn default_n_speakers() -> usize {
    4
}
fn default_utts() -> usize {
    10
}
fn default_frames() -> usize {
    200
}
fn default_low() -> f64 {
    120.0
}
fn default_high() -> f64 {
    220.0
}
fn default_jitter() -> f64 {
    15.0
}
fn default_amplitude() -> f64 {
    2.5
}
fn default_duty() -> f64 {
    0.7
}
fn default_noise() -> f64 {
    0.3
}
fn default_d_bn() -> usize {
    256
}
fn default_d_xv() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_n_speakers")]
    pub n_speakers: usize,
    #[serde(default = "default_utts")]
    pub utterances_per_speaker: usize,
    #[serde(default = "default_frames")]
    pub frames_per_utterance: usize,
    /// Mean F0 of the low register in Hz; even-indexed speakers use it.
    #[serde(default = "default_low")]
    pub register_low_hz: f64,
    /// Mean F0 of the high register in Hz; odd-indexed speakers use it.
    #[serde(default = "default_high")]
    pub register_high_hz: f64,
    /// Uniform jitter applied to each speaker's register mean.
    #[serde(default = "default_jitter")]
    pub register_jitter_hz: f64,
    /// Peak semitone excursion of the intonation contour.
    #[serde(default = "default_amplitude")]
    pub contour_amplitude_st: f64,
    /// Fraction of frames that are voiced.
    #[serde(default = "default_duty")]
    pub voicing_duty: f64,
    /// Std of the Gaussian semitone noise added to voiced F0.
    #[serde(default = "default_noise")]
    pub noise_std_st: f64,
    #[serde(default = "default_d_bn")]
    pub d_bn: usize,
    #[serde(default = "default_d_xv")]
    pub d_xv: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_speakers: default_n_speakers(),
            utterances_per_speaker: default_utts(),
            frames_per_utterance: default_frames(),
            register_low_hz: default_low(),
            register_high_hz: default_high(),
            register_jitter_hz: default_jitter(),
            contour_amplitude_st: default_amplitude(),
            voicing_duty: default_duty(),
            noise_std_st: default_noise(),
            d_bn: default_d_bn(),
            d_xv: default_d_xv(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0
            || self.utterances_per_speaker == 0
            || self.frames_per_utterance == 0
        {
            return Err(Error::Config(
                "speaker, utterance, and frame counts must all be >= 1".into(),
            ));
        }
        if self.register_low_hz <= 0.0 || self.register_high_hz <= 0.0 {
            return Err(Error::Config("register means must be > 0 Hz".into()));
        }
        if self.register_jitter_hz < 0.0
            || self.noise_std_st < 0.0
            || self.contour_amplitude_st < 0.0
        {
            return Err(Error::Config(
                "jitter, noise, and amplitude must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.voicing_duty) {
            return Err(Error::Config(format!(
                "voicing_duty must be in [0, 1], got {}",
                self.voicing_duty
            )));
        }
        if self.d_bn < 2 {
            return Err(Error::Config(
                "d_bn must be >= 2 (contour + voicing channels)".into(),
            ));
        }
        if self.d_xv == 0 {
            return Err(Error::Config("d_xv must be >= 1".into()));
        }
        Ok(())
    }
}

/// Box-Muller standard normal.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Alternating voiced/unvoiced runs hitting `duty` on average. Run lengths
/// jitter around a 30-frame cycle.
fn voicing_mask(rng: &mut ChaCha8Rng, frames: usize, duty: f64) -> Vec<bool> {
    if duty >= 1.0 {
        return vec![true; frames];
    }
    if duty <= 0.0 {
        return vec![false; frames];
    }
    const CYCLE: f64 = 30.0;
    let mut mask = Vec::with_capacity(frames);
    let mut voiced = true;
    while mask.len() < frames {
        let base = if voiced {
            duty * CYCLE
        } else {
            (1.0 - duty) * CYCLE
        };
        let len = (base * rng.gen_range(0.8..1.2)).round().max(1.0) as usize;
        for _ in 0..len.min(frames - mask.len()) {
            mask.push(voiced);
        }
        voiced = !voiced;
    }
    mask
}

/// Deterministic synthetic corpus per the spec's seed.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Vec<UtteranceRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n_speakers * spec.utterances_per_speaker);
    let frames = spec.frames_per_utterance;
    let n_pos = (spec.d_bn - 2).min(6);

    for s in 0..spec.n_speakers {
        let base = if s % 2 == 0 {
            spec.register_low_hz
        } else {
            spec.register_high_hz
        };
        let mu = base + spec.register_jitter_hz * rng.gen_range(-1.0..1.0);
        let speaker_id = format!("spk{s:02}");

        // Fixed random unit vector per speaker, with the leading block
        // overwritten by the linear register code.
        let mut xvec: Vec<f64> = (0..spec.d_xv).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = xvec.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut xvec {
            *v /= norm;
        }
        let code = (mu / XVEC_REGISTER_REF_HZ).ln();
        for v in xvec.iter_mut().take(XVEC_REGISTER_BLOCK.min(spec.d_xv)) {
            *v = code;
        }
        let xvec_f32: Vec<f32> = xvec.iter().map(|&v| v as f32).collect();

        for u in 0..spec.utterances_per_speaker {
            let utt_id = format!("{speaker_id}_utt{u:03}");

            // Smooth contour: 2-4 slow sinusoids in the semitone domain.
            let n_components = rng.gen_range(2..=4usize);
            let components: Vec<(f64, f64, f64)> = (0..n_components)
                .map(|_| {
                    (
                        rng.gen_range(0.5..1.0),
                        rng.gen_range(0.2..1.2),
                        rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                    )
                })
                .collect();
            let contour: Vec<f64> = (0..frames)
                .map(|t| {
                    let time = t as f64 * DEFAULT_HOP_S;
                    let sum: f64 = components
                        .iter()
                        .map(|&(amp, freq, phase)| {
                            amp * (2.0 * std::f64::consts::PI * freq * time + phase).sin()
                        })
                        .sum();
                    spec.contour_amplitude_st * sum / n_components as f64
                })
                .collect();

            let mask = voicing_mask(&mut rng, frames, spec.voicing_duty);

            let f0: Vec<f64> = (0..frames)
                .map(|t| {
                    if mask[t] {
                        let eps = spec.noise_std_st * gauss(&mut rng);
                        let hz = mu * ((contour[t] + eps) / 12.0).exp2();
                        hz as f32 as f64 // container precision
                    } else {
                        0.0
                    }
                })
                .collect();

            let mut bn = vec![0.0f32; frames * spec.d_bn];
            for t in 0..frames {
                let row = &mut bn[t * spec.d_bn..(t + 1) * spec.d_bn];
                row[0] = contour[t] as f32;
                row[1] = if mask[t] { 1.0 } else { 0.0 };
                for k in 0..n_pos {
                    let cycle =
                        2.0 * std::f64::consts::PI * (k / 2 + 1) as f64 * t as f64 / frames as f64;
                    row[2 + k] = if k % 2 == 0 { cycle.sin() } else { cycle.cos() } as f32;
                }
                for v in row.iter_mut() {
                    *v += (0.01 * rng.gen_range(-1.0..1.0)) as f32;
                }
            }

            records.push(UtteranceRecord {
                utt_id,
                speaker_id: speaker_id.clone(),
                bn: FeatMatrix::new(spec.d_bn, bn)?,
                xvec: xvec_f32.clone(),
                f0: F0Trajectory {
                    values: f0,
                    hop: DEFAULT_HOP_S,
                    window: DEFAULT_WINDOW_S,
                },
            });
        }
    }
    Ok(records)
}

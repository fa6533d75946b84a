//! Mono WAV ingestion for ground-truth pitch extraction.

use std::path::Path;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};

/// Reads a mono PCM WAV (16-bit signed or 32-bit float) into `[-1, 1]` samples
/// at the file's sample rate. No resampling is performed.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "{}: expected mono audio, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
            "{}: unsupported sample format {fmt:?}/{bits}-bit (want 16-bit PCM or 32-bit float)",
            path.display()
        )))
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

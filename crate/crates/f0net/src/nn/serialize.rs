//! Model bytes: length-prefixed config JSON, raw little-endian f64 parameters
//! in layer order (weights row-major, then bias), then the two normalization
//! statistics. Round trips are bit-exact.

use std::io::Read;

use crate::dsp::NormStats;
use crate::error::{Error, Result};
use crate::io_util::{put_prefixed, read_exact, read_f64_le, read_u32_le};
use crate::mat::Mat;
use crate::nn::model::{LayerParams, MlpModel, ModelConfig};

pub fn write_model(out: &mut Vec<u8>, model: &MlpModel, stats: &NormStats) {
    let header = serde_json::to_vec(&model.config).expect("config serializes");
    put_prefixed(out, &header);
    for layer in &model.layers {
        for w in layer.weights.data() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.bias {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    out.extend_from_slice(&stats.mean_log.to_le_bytes());
    out.extend_from_slice(&stats.std_log.to_le_bytes());
}

pub fn read_model(r: &mut impl Read) -> Result<(MlpModel, NormStats)> {
    let header_len = read_u32_le(r, "model header length")? as usize;
    let header = read_exact(r, header_len, "model config header")?;
    let config: ModelConfig = serde_json::from_slice(&header)
        .map_err(|e| Error::Format(format!("model config header: {e}")))?;
    config.validate()?;

    let mut layers = Vec::new();
    for (li, (in_dim, out_dim)) in config.layer_dims().into_iter().enumerate() {
        let mut weights = Mat::zeros(out_dim, in_dim);
        for w in weights.data_mut() {
            *w = read_f64_le(r, &format!("layer {li} weights"))?;
        }
        let mut bias = vec![0.0; out_dim];
        for b in bias.iter_mut() {
            *b = read_f64_le(r, &format!("layer {li} bias"))?;
        }
        layers.push(LayerParams { weights, bias });
    }
    let mean_log = read_f64_le(r, "norm stats mean")?;
    let std_log = read_f64_le(r, "norm stats std")?;
    Ok((MlpModel { config, layers }, NormStats { mean_log, std_log }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{init_model, Activation};

    fn model() -> MlpModel {
        init_model(
            &ModelConfig {
                input_dim: 5,
                hidden: vec![4, 3],
                activation: Activation::Relu,
                dropout_p: 0.1,
            },
            42,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let stats = NormStats::new(4.9, 0.37);
        let mut bytes = Vec::new();
        write_model(&mut bytes, &m, &stats);
        let (m2, s2) = read_model(&mut bytes.as_slice()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(stats, s2);

        let mut bytes2 = Vec::new();
        write_model(&mut bytes2, &m2, &s2);
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let m = model();
        let mut bytes = Vec::new();
        write_model(&mut bytes, &m, &NormStats::new(5.0, 0.3));
        bytes.truncate(bytes.len() - 13);
        let err = read_model(&mut bytes.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn garbage_header_is_a_format_error() {
        let bytes = [3u8, 0, 0, 0, b'x', b'y', b'z'];
        assert!(matches!(
            read_model(&mut bytes.as_slice()),
            Err(Error::Format(_))
        ));
    }
}

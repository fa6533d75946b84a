//! Bundle files: the model serialization followed by a length-prefixed
//! training-config JSON. History exports as `epoch,train_loss,val_loss,lr`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::{put_prefixed, read_exact, read_file, read_u32_le, write_atomic};
use crate::nn::{read_model, write_model};
use crate::train::{EpochReport, TrainConfig, TrainedBundle};

pub fn bundle_bytes(bundle: &TrainedBundle) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_model(&mut bytes, &bundle.model, &bundle.stats);
    let cfg = serde_json::to_vec(&bundle.train_config).expect("config serializes");
    put_prefixed(&mut bytes, &cfg);
    bytes
}

pub fn save_bundle(bundle: &TrainedBundle, path: &Path) -> Result<()> {
    write_atomic(path, &bundle_bytes(bundle))
}

pub fn load_bundle(path: &Path) -> Result<TrainedBundle> {
    let bytes = read_file(path)?;
    let mut cursor = bytes.as_slice();
    let (model, stats) = read_model(&mut cursor)?;
    let cfg_len = read_u32_le(&mut cursor, "train config length")? as usize;
    let cfg_bytes = read_exact(&mut cursor, cfg_len, "train config")?;
    let train_config: TrainConfig = serde_json::from_slice(&cfg_bytes)
        .map_err(|e| Error::Format(format!("{}: train config: {e}", path.display())))?;
    Ok(TrainedBundle {
        model,
        stats,
        train_config,
    })
}

pub fn history_csv(history: &[EpochReport]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,lr\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.train_loss, h.val_loss, h.current_lr
        ));
    }
    out
}

pub fn write_history_csv(history: &[EpochReport], path: &Path) -> Result<()> {
    write_atomic(path, history_csv(history).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::NormStats;
    use crate::nn::{init_model, Activation, ModelConfig};

    fn bundle() -> TrainedBundle {
        TrainedBundle {
            model: init_model(
                &ModelConfig {
                    input_dim: 4,
                    hidden: vec![3],
                    activation: Activation::Relu,
                    dropout_p: 0.0,
                },
                8,
            )
            .unwrap(),
            stats: NormStats::new(5.0, 0.4),
            train_config: TrainConfig::default(),
        }
    }

    #[test]
    fn bundle_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.f0m");
        let b = bundle();
        save_bundle(&b, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(b, loaded);
        assert_eq!(bundle_bytes(&b), bundle_bytes(&loaded));
    }

    #[test]
    fn truncated_bundle_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.f0m");
        save_bundle(&bundle(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_bundle(&path), Err(Error::Format(_))));
    }

    #[test]
    fn history_csv_lists_one_row_per_epoch() {
        let history = vec![
            EpochReport {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.4,
                current_lr: 0.0007,
                stale_epochs_early_stop: 0,
                stale_epochs_lr: 0,
            },
            EpochReport {
                epoch: 2,
                train_loss: 0.3,
                val_loss: 0.45,
                current_lr: 0.0007,
                stale_epochs_early_stop: 1,
                stale_epochs_lr: 1,
            },
        ];
        let csv = history_csv(&history);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch,train_loss,val_loss,lr");
        assert_eq!(lines[1], "1,0.5,0.4,0.0007");
    }
}

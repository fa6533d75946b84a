//! Corpus container format and a tiny CSV import path for hand-written tests.
//!
//! Binary layout:
//!
//! ```text
//! "F0C1"                      4-byte magic
//! manifest_len: u32 LE
//! manifest: UTF-8 JSON        dims, framing, utterance table with offsets
//! payloads                    per utterance, at manifest offset from here:
//!   bn   row-major f32 LE     n_frames * d_bn
//!   xvec f32 LE               d_xv
//!   f0   f32 LE (Hz, 0=uv)    n_frames
//! ```
//!
//! Offsets in the manifest are relative to the end of the manifest (the start
//! of the payload section). Round trips are bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FeatMatrix, UtteranceRecord};
use crate::dsp::{F0Trajectory, DEFAULT_HOP_S, DEFAULT_WINDOW_S};
use crate::error::{Error, Result};
use crate::io_util::{put_prefixed, read_file, write_atomic};

pub const CORPUS_MAGIC: &[u8; 4] = b"F0C1";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    utt_id: String,
    speaker_id: String,
    n_frames: usize,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    d_bn: usize,
    d_xv: usize,
    hop_s: f64,
    window_s: f64,
    utterances: Vec<ManifestEntry>,
}

fn put_f32s(out: &mut Vec<u8>, values: impl Iterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn utt_payload_bytes(d_bn: usize, d_xv: usize, n_frames: usize) -> usize {
    (n_frames * d_bn + d_xv + n_frames) * 4
}

pub fn save_corpus(utterances: &[UtteranceRecord], path: &Path) -> Result<()> {
    if utterances.is_empty() {
        return Err(Error::Config("refusing to write an empty corpus".into()));
    }
    let d_bn = utterances[0].bn.dim();
    let d_xv = utterances[0].xvec.len();
    let hop_s = utterances[0].f0.hop;
    let window_s = utterances[0].f0.window;

    let mut entries = Vec::with_capacity(utterances.len());
    let mut offset = 0usize;
    for u in utterances {
        if u.bn.dim() != d_bn || u.xvec.len() != d_xv {
            return Err(Error::Shape(format!(
                "utterance {}: dims differ from corpus dims {d_bn}/{d_xv}",
                u.utt_id
            )));
        }
        if u.f0.hop != hop_s || u.f0.window != window_s {
            return Err(Error::Config(format!(
                "utterance {}: framing differs from the corpus framing",
                u.utt_id
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
        entries.push(ManifestEntry {
            utt_id: u.utt_id.clone(),
            speaker_id: u.speaker_id.clone(),
            n_frames: u.n_frames(),
            offset,
        });
        offset += utt_payload_bytes(d_bn, d_xv, u.n_frames());
    }

    let manifest = Manifest {
        d_bn,
        d_xv,
        hop_s,
        window_s,
        utterances: entries,
    };
    let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");

    let mut bytes = Vec::with_capacity(8 + manifest_json.len() + offset);
    bytes.extend_from_slice(CORPUS_MAGIC);
    put_prefixed(&mut bytes, &manifest_json);
    for u in utterances {
        put_f32s(&mut bytes, u.bn.data().iter().copied());
        put_f32s(&mut bytes, u.xvec.iter().copied());
        put_f32s(&mut bytes, u.f0.values.iter().map(|&v| v as f32));
    }
    write_atomic(path, &bytes)
}

pub fn load_corpus(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let bytes = read_file(path)?;
    if bytes.len() < 8 {
        return Err(Error::Format(format!(
            "{}: file too short for a corpus header",
            path.display()
        )));
    }
    if &bytes[..4] != CORPUS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            &bytes[..4],
            CORPUS_MAGIC
        )));
    }
    let manifest_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let payload_base = 8 + manifest_len;
    if bytes.len() < payload_base {
        return Err(Error::Format(format!(
            "{}: manifest claims {manifest_len} bytes but file ends early",
            path.display()
        )));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[8..payload_base])
        .map_err(|e| Error::Format(format!("{}: manifest: {e}", path.display())))?;

    let payload = &bytes[payload_base..];
    let mut records = Vec::with_capacity(manifest.utterances.len());
    for entry in &manifest.utterances {
        let need = utt_payload_bytes(manifest.d_bn, manifest.d_xv, entry.n_frames);
        let end = entry
            .offset
            .checked_add(need)
            .ok_or_else(|| Error::Format(format!("utterance {}: offset overflow", entry.utt_id)))?;
        if end > payload.len() {
            return Err(Error::Format(format!(
                "utterance {}: expected {need} payload bytes at offset {}, only {} available",
                entry.utt_id,
                entry.offset,
                payload.len().saturating_sub(entry.offset)
            )));
        }
        let mut cursor = &payload[entry.offset..end];
        let mut take_f32s = |n: usize| -> Vec<f32> {
            let (head, rest) = cursor.split_at(n * 4);
            cursor = rest;
            head.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let bn = take_f32s(entry.n_frames * manifest.d_bn);
        let xvec = take_f32s(manifest.d_xv);
        let f0: Vec<f64> = take_f32s(entry.n_frames)
            .into_iter()
            .map(|v| v as f64)
            .collect();
        records.push(UtteranceRecord {
            utt_id: entry.utt_id.clone(),
            speaker_id: entry.speaker_id.clone(),
            bn: FeatMatrix::new(manifest.d_bn, bn)?,
            xvec,
            f0: F0Trajectory::new(f0, manifest.hop_s, manifest.window_s)?,
        });
    }
    Ok(records)
}

/// CSV import for tiny hand-written corpora: a manifest CSV with header
/// `utt_id,speaker_id,frames_csv,xvec_csv`, where `frames_csv` holds one
/// `f0_hz,bn0,bn1,...` line per frame and `xvec_csv` a single line of
/// embedding values. Paths are resolved relative to the manifest.
pub fn load_corpus_csv(manifest_path: &Path) -> Result<Vec<UtteranceRecord>> {
    let text = String::from_utf8(read_file(manifest_path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines();
    match lines.next() {
        Some("utt_id,speaker_id,frames_csv,xvec_csv") => {}
        other => {
            return Err(Error::Format(format!(
                "{}: expected manifest header, got {other:?}",
                manifest_path.display()
            )))
        }
    }

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "{}:{}: expected 4 fields, got {}",
                manifest_path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let frames_path = dir.join(fields[2]);
        let xvec_path = dir.join(fields[3]);

        let frames_text = String::from_utf8(read_file(&frames_path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", frames_path.display())))?;
        let mut f0 = Vec::new();
        let mut bn = Vec::new();
        let mut d_bn = None;
        for (fno, row) in frames_text.lines().enumerate() {
            if row.trim().is_empty() {
                continue;
            }
            let mut values = row.split(',').map(|v| {
                v.trim().parse::<f32>().map_err(|e| {
                    Error::Format(format!("{}:{}: {e}", frames_path.display(), fno + 1))
                })
            });
            let hz = values.next().ok_or_else(|| {
                Error::Format(format!("{}:{}: empty row", frames_path.display(), fno + 1))
            })??;
            f0.push(hz as f64);
            let row_bn: Vec<f32> = values.collect::<Result<_>>()?;
            match d_bn {
                None => d_bn = Some(row_bn.len()),
                Some(d) if d != row_bn.len() => {
                    return Err(Error::Format(format!(
                        "{}:{}: row has {} bn values, expected {d}",
                        frames_path.display(),
                        fno + 1,
                        row_bn.len()
                    )))
                }
                _ => {}
            }
            bn.extend(row_bn);
        }
        let d_bn = d_bn
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Format(format!("{}: no frames", frames_path.display())))?;

        let xvec_text = String::from_utf8(read_file(&xvec_path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", xvec_path.display())))?;
        let xvec: Vec<f32> = xvec_text
            .trim()
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f32>()
                    .map_err(|e| Error::Format(format!("{}: {e}", xvec_path.display())))
            })
            .collect::<Result<_>>()?;

        records.push(UtteranceRecord {
            utt_id: fields[0].to_string(),
            speaker_id: fields[1].to_string(),
            bn: FeatMatrix::new(d_bn, bn)?,
            xvec,
            f0: F0Trajectory::new(f0, DEFAULT_HOP_S, DEFAULT_WINDOW_S)?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticSpec};

    fn small_corpus() -> Vec<UtteranceRecord> {
        gen_synthetic(&SyntheticSpec {
            n_speakers: 2,
            utterances_per_speaker: 2,
            frames_per_utterance: 30,
            d_bn: 5,
            d_xv: 6,
            seed: 3,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.f0c");
        let corpus = small_corpus();
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(corpus, loaded);

        // Saving the reload reproduces the file byte for byte.
        let path2 = dir.path().join("corpus2.f0c");
        save_corpus(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.f0c");
        save_corpus(&small_corpus(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_payload_names_the_utterance_and_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.f0c");
        let corpus = small_corpus();
        save_corpus(&corpus, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 40);
        std::fs::write(&path, &bytes).unwrap();
        let err = load_corpus(&path).unwrap_err().to_string();
        let last_id = &corpus.last().unwrap().utt_id;
        assert!(err.contains(last_id.as_str()), "{err}");
        assert!(err.contains("expected") && err.contains("bytes"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_corpus(Path::new("/nonexistent/corpus.f0c")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn csv_import_reads_hand_written_corpora() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("manifest.csv"),
            "utt_id,speaker_id,frames_csv,xvec_csv\nu1,s1,u1.csv,s1_xvec.csv\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("u1.csv"),
            "110.0,0.5,1.0\n0.0,0.25,0.0\n115.5,0.75,1.0\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("s1_xvec.csv"), "0.1,-0.2,0.3\n").unwrap();

        let records = load_corpus_csv(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.utt_id, "u1");
        assert_eq!(r.speaker_id, "s1");
        assert_eq!(r.n_frames(), 3);
        assert_eq!(r.bn.dim(), 2);
        assert_eq!(r.f0.values, vec![110.0, 0.0, 115.5]);
        assert_eq!(r.xvec, vec![0.1, -0.2, 0.3]);
        assert_eq!(r.bn.frame(1), &[0.25, 0.0]);
    }

    #[test]
    fn csv_import_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("manifest.csv"),
            "utt_id,speaker_id,frames_csv,xvec_csv\nu1,s1,u1.csv,x.csv\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("u1.csv"), "110.0,0.5,1.0\n100.0,0.25\n").unwrap();
        std::fs::write(dir.path().join("x.csv"), "0.1\n").unwrap();
        assert!(load_corpus_csv(&dir.path().join("manifest.csv")).is_err());
    }
}

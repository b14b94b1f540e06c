//! The small-image binary format: 3073-byte records, one label byte followed
//! by 3072 channel-major pixel bytes (3 channels of 32x32). Loads scale
//! pixels to [0, 1] and apply per-channel normalization whose constants are
//! recorded in the dataset provenance.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::checkpoint::hex_string;
use crate::data::{ChannelNorm, Dataset, Provenance, Split};
use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;
pub const SIDE: usize = 32;
pub const IMAGE_BYTES: usize = CHANNELS * SIDE * SIDE;
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;
pub const NUM_CLASSES: usize = 10;

/// Raw parsed records: labels plus channel-major pixel bytes per record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecords {
    pub labels: Vec<u8>,
    pub pixels: Vec<u8>,
}

/// Parses one file's bytes, rejecting any malformed input with its offset.
pub fn parse_records(bytes: &[u8]) -> Result<RawRecords> {
    if bytes.len() % RECORD_BYTES != 0 {
        let offset = (bytes.len() / RECORD_BYTES) * RECORD_BYTES;
        return Err(Error::format(format!(
            "file length {} is not a multiple of {RECORD_BYTES}; partial record at offset {offset}",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * IMAGE_BYTES);
    for r in 0..n {
        let offset = r * RECORD_BYTES;
        let label = bytes[offset];
        if label as usize >= NUM_CLASSES {
            return Err(Error::format(format!(
                "label byte {label} out of range at offset {offset}"
            )));
        }
        labels.push(label);
        pixels.extend_from_slice(&bytes[offset + 1..offset + RECORD_BYTES]);
    }
    Ok(RawRecords { labels, pixels })
}

pub fn records_to_bytes(records: &RawRecords) -> Result<Vec<u8>> {
    if records.pixels.len() != records.labels.len() * IMAGE_BYTES {
        return Err(Error::format(format!(
            "{} labels with {} pixel bytes",
            records.labels.len(),
            records.pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(records.labels.len() * RECORD_BYTES);
    for (i, &label) in records.labels.iter().enumerate() {
        out.push(label);
        out.extend_from_slice(&records.pixels[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]);
    }
    Ok(out)
}

pub fn write_records(records: &RawRecords, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, records_to_bytes(records)?)?;
    Ok(())
}

/// Per-channel mean/std of [0,1]-scaled pixels; zero-variance channels get
/// std 1 so normalization stays a bijection.
pub fn compute_channel_norm(records: &RawRecords) -> ChannelNorm {
    let n = records.labels.len();
    let plane = SIDE * SIDE;
    let mut mean = vec![0.0f64; CHANNELS];
    let mut sq = vec![0.0f64; CHANNELS];
    for r in 0..n {
        for c in 0..CHANNELS {
            let base = r * IMAGE_BYTES + c * plane;
            for p in 0..plane {
                let v = f64::from(records.pixels[base + p]) / 255.0;
                mean[c] += v;
                sq[c] += v * v;
            }
        }
    }
    let count = (n * plane) as f64;
    let mut out_mean = Vec::with_capacity(CHANNELS);
    let mut out_std = Vec::with_capacity(CHANNELS);
    for c in 0..CHANNELS {
        let m = mean[c] / count;
        let var = (sq[c] / count - m * m).max(0.0);
        let std = var.sqrt();
        out_mean.push(m as f32);
        out_std.push(if std > 0.0 { std as f32 } else { 1.0 });
    }
    ChannelNorm { mean: out_mean, std: out_std }
}

/// Loads and concatenates binary files into a dataset. When `normalization`
/// is `None` the constants are computed from the loaded data (use this for
/// the train split) and recorded in the provenance either way.
pub fn load_small_image_binary(
    paths: &[std::path::PathBuf],
    split: Split,
    normalization: Option<ChannelNorm>,
) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::data("no input files given".to_string()));
    }
    let mut hasher = Sha256::new();
    let mut all = RawRecords { labels: Vec::new(), pixels: Vec::new() };
    for path in paths {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::format(format!("cannot read {}: {e}", path.display())))?;
        hasher.update(&bytes);
        let records = parse_records(&bytes)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        all.labels.extend_from_slice(&records.labels);
        all.pixels.extend_from_slice(&records.pixels);
    }
    let digest = hex_string(&hasher.finalize());
    let norm = normalization.unwrap_or_else(|| compute_channel_norm(&all));

    let plane = SIDE * SIDE;
    let mut inputs = Vec::with_capacity(all.labels.len() * IMAGE_BYTES);
    for r in 0..all.labels.len() {
        for c in 0..CHANNELS {
            let base = r * IMAGE_BYTES + c * plane;
            for p in 0..plane {
                let v = f32::from(all.pixels[base + p]) / 255.0;
                inputs.push((v - norm.mean[c]) / norm.std[c]);
            }
        }
    }
    let labels: Vec<u32> = all.labels.iter().map(|&l| u32::from(l)).collect();
    Dataset::from_parts(
        vec![CHANNELS, SIDE, SIDE],
        NUM_CLASSES,
        inputs,
        labels,
        split,
        Provenance::SmallImageFile { digest, normalization: norm, split },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamPurpose};
    use rand_core::RngCore;

    fn synthetic_records(n: usize, seed: u64) -> RawRecords {
        let mut rng = stream(seed, StreamPurpose::GenNoise, 0);
        let labels: Vec<u8> = (0..n).map(|_| (rng.next_u32() % 10) as u8).collect();
        let pixels: Vec<u8> = (0..n * IMAGE_BYTES).map(|_| (rng.next_u32() & 0xff) as u8).collect();
        RawRecords { labels, pixels }
    }

    #[test]
    fn two_valid_records_load() {
        let records = synthetic_records(2, 1);
        let bytes = records_to_bytes(&records).unwrap();
        assert_eq!(bytes.len(), 2 * RECORD_BYTES);
        let parsed = parse_records(&bytes).unwrap();
        assert_eq!(parsed, records);
    }

    #[test]
    fn truncated_file_rejected_at_offset_zero() {
        let bytes = vec![0u8; RECORD_BYTES - 1];
        let err = parse_records(&bytes).unwrap_err().to_string();
        assert!(err.contains("offset 0"), "{err}");
    }

    #[test]
    fn bad_label_rejected_with_offset() {
        let mut records = synthetic_records(2, 1);
        records.labels[1] = 10;
        let bytes = records_to_bytes(&records).unwrap();
        let err = parse_records(&bytes).unwrap_err().to_string();
        assert!(err.contains(&format!("offset {RECORD_BYTES}")), "{err}");
    }

    #[test]
    fn byte_round_trip_is_identity() {
        let records = synthetic_records(5, 3);
        let bytes = records_to_bytes(&records).unwrap();
        let reparsed = parse_records(&bytes).unwrap();
        assert_eq!(reparsed, records);
        assert_eq!(records_to_bytes(&reparsed).unwrap(), bytes);
    }

    #[test]
    fn file_round_trip_and_normalized_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let records = synthetic_records(8, 7);
        write_records(&records, &path).unwrap();

        let ds = load_small_image_binary(&[path.clone()], Split::Train, None).unwrap();
        assert_eq!(ds.len(), 8);
        assert_eq!(ds.sample_shape(), &[3, 32, 32]);
        let Provenance::SmallImageFile { normalization, .. } = ds.provenance().clone() else {
            panic!("wrong provenance");
        };
        // Undo normalization and rescale: pixels must quantize back exactly.
        for i in 0..ds.len() {
            for (j, &v) in ds.sample(i).iter().enumerate() {
                let c = j / (SIDE * SIDE);
                let raw = (v * normalization.std[c] + normalization.mean[c]) * 255.0;
                let byte = raw.round() as i64;
                assert_eq!(byte, i64::from(records.pixels[i * IMAGE_BYTES + j]));
            }
        }
        // Loading the test split with train constants keeps them verbatim.
        let ds2 = load_small_image_binary(&[path], Split::Test, Some(normalization.clone())).unwrap();
        let Provenance::SmallImageFile { normalization: norm2, .. } = ds2.provenance().clone() else {
            panic!("wrong provenance");
        };
        assert_eq!(norm2, normalization);
    }
}

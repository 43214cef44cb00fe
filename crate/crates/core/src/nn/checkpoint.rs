//! Checkpoint format: a JSON manifest plus one blob of little-endian f32 values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GbacError, Result};
use crate::nn::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config_digest: String,
    /// Blob file name, relative to the manifest's directory.
    pub blob: String,
    pub tensors: Vec<TensorRecord>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Blob path paired with a manifest path (`x.json` -> `x.bin`).
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes `tensors` under `manifest_path` and its sibling `.bin`.
pub fn save(
    manifest_path: &Path,
    config_digest: &str,
    tensors: &[(String, &Tensor<f32>)],
    meta: serde_json::Value,
) -> Result<Manifest> {
    let mut blob = Vec::new();
    let mut records = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let offset = blob.len() as u64;
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        records.push(TensorRecord {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f32".into(),
            byte_offset: offset,
            byte_len: blob.len() as u64 - offset,
        });
    }
    let blob_file = blob_path(manifest_path);
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_digest: config_digest.to_string(),
        blob: blob_file
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| GbacError::Checkpoint(format!("bad checkpoint path {}", manifest_path.display())))?
            .to_string(),
        tensors: records,
        meta,
    };
    if let Some(dir) = manifest_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    // blob first so a readable manifest always points at a complete blob
    fs::write(&blob_file, &blob)?;
    fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a manifest and its blob, validating every record.
pub fn load(manifest_path: &Path) -> Result<(Manifest, Vec<(String, Tensor<f32>)>)> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)
        .map_err(|e| GbacError::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(GbacError::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let blob = fs::read(dir.join(&manifest.blob))?;
    let mut out = Vec::with_capacity(manifest.tensors.len());
    for rec in &manifest.tensors {
        if rec.dtype != "f32" {
            return Err(GbacError::Checkpoint(format!("{}: unsupported dtype {}", rec.name, rec.dtype)));
        }
        let count: usize = rec.shape.iter().product();
        if rec.byte_len != 4 * count as u64 {
            return Err(GbacError::Checkpoint(format!(
                "{}: byte_len {} does not match shape {:?}",
                rec.name, rec.byte_len, rec.shape
            )));
        }
        let start = rec.byte_offset as usize;
        let end = start + rec.byte_len as usize;
        let bytes = blob.get(start..end).ok_or_else(|| {
            GbacError::Checkpoint(format!("{}: range {start}..{end} outside blob", rec.name))
        })?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((rec.name.clone(), Tensor::from_vec(&rec.shape, data)?));
    }
    Ok((manifest, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(any::<f32>(), 0..64), split in 0usize..64) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ck.json");
            let split = split.min(values.len());
            let a = Tensor::from_vec(&[split], values[..split].to_vec()).unwrap();
            let b = Tensor::from_vec(&[values.len() - split, 1], values[split..].to_vec()).unwrap();
            save(&path, "abc", &[("a".into(), &a), ("b".into(), &b)], serde_json::json!({"k": 1})).unwrap();
            let (m, loaded) = load(&path).unwrap();
            prop_assert_eq!(m.config_digest, "abc");
            prop_assert_eq!(loaded.len(), 2);
            for ((_, got), want) in loaded.iter().zip([&a, &b]) {
                prop_assert_eq!(got.shape(), want.shape());
                let gb: Vec<u32> = got.data().iter().map(|v| v.to_bits()).collect();
                let wb: Vec<u32> = want.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(gb, wb);
            }
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let t = Tensor::from_vec(&[3], vec![1.0f32, 2.0, 3.0]).unwrap();
        save(&path, "d", &[("t".into(), &t)], serde_json::Value::Null).unwrap();
        fs::write(blob_path(&path), [0u8; 8]).unwrap();
        assert!(matches!(load(&path), Err(GbacError::Checkpoint(_))));
    }
}

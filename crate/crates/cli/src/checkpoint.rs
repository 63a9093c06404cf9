//! Model checkpoints: a JSON manifest next to one little-endian f32 blob per
//! weight matrix, each with its shape and SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use gta_core::data::sha256_hex;
use gta_core::{DenseMat, GcnParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "gta-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    pub name: String,
    pub shape: [usize; 2],
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    /// `natural` or `robust`.
    pub kind: String,
    /// Split seed the model was trained under.
    pub seed: u64,
    pub tensors: Vec<TensorRef>,
}

/// Directory of the checkpoint for `seed` inside a model directory.
pub fn seed_dir(models: &Path, seed: u64) -> PathBuf {
    models.join(format!("seed-{seed}"))
}

fn encode(m: &DenseMat) -> Vec<u8> {
    m.data()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

/// Weights as they will read back from disk.
pub fn quantize(params: &GcnParams) -> GcnParams {
    let q = |m: &DenseMat| m.map(|v| v as f32 as f64);
    GcnParams {
        w1: q(&params.w1),
        w2: q(&params.w2),
    }
}

pub fn save(params: &GcnParams, kind: &str, seed: u64, dir: &Path) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tensors = Vec::new();
    for (name, m) in [("w1", &params.w1), ("w2", &params.w2)] {
        let bytes = encode(m);
        let file = format!("{name}.bin");
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| CliError::io(&path, e))?;
        tensors.push(TensorRef {
            name: name.into(),
            shape: [m.rows(), m.cols()],
            file,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        kind: kind.into(),
        seed,
        tensors,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(CheckpointManifest, GcnParams)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| CliError::checkpoint(&path, e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(CliError::checkpoint(
            &path,
            format!("unsupported format `{}`", manifest.format),
        ));
    }
    let tensor = |name: &str| -> Result<DenseMat> {
        let t = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::checkpoint(&path, format!("missing tensor `{name}`")))?;
        let file = dir.join(&t.file);
        let bytes = fs::read(&file).map_err(|e| CliError::io(&file, e))?;
        if sha256_hex(&bytes) != t.sha256 {
            return Err(CliError::checkpoint(&file, "checksum mismatch"));
        }
        let [rows, cols] = t.shape;
        if bytes.len() != rows * cols * 4 {
            return Err(CliError::checkpoint(
                &file,
                format!("{} bytes for a {rows}x{cols} f32 tensor", bytes.len()),
            ));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        DenseMat::from_vec(rows, cols, values)
            .map_err(|e| CliError::checkpoint(&file, e.to_string()))
    };
    let params = GcnParams::new(tensor("w1")?, tensor("w2")?)
        .map_err(|e| CliError::checkpoint(&path, e.to_string()))?;
    Ok((manifest, params))
}

//! Parameter directories: `meta.json` plus one little-endian f64 file per
//! named parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::nn::ParamSet;
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub params: Vec<ParamEntry>,
    /// Free-form hyperparameters, seed and provenance hashes.
    pub metadata: serde_json::Value,
}

pub fn save_params(dir: &Path, named: &[(String, &Matrix)], metadata: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(named.len());
    for (name, m) in named {
        let file = format!("{name}.f64");
        let mut bytes = Vec::with_capacity(m.len() * 8);
        for v in m.as_slice() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ParamEntry {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            file,
        });
    }
    let meta = ParamMeta {
        params: entries,
        metadata,
    };
    let path = dir.join(META_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_meta(dir: &Path) -> Result<ParamMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_params(dir: &Path) -> Result<(Vec<(String, Matrix)>, serde_json::Value)> {
    let meta = load_meta(dir)?;
    let mut out = Vec::with_capacity(meta.params.len());
    for entry in meta.params {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != entry.rows * entry.cols * 8 {
            return Err(Error::Validation(format!(
                "{}: expected {} bytes for {}x{}, found {}",
                path.display(),
                entry.rows * entry.cols * 8,
                entry.rows,
                entry.cols,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.push((entry.name, Matrix::new(entry.rows, entry.cols, data)?));
    }
    Ok((out, meta.metadata))
}

/// Copies loaded values into `target`, requiring identical names and shapes.
pub fn assign_params<P: ParamSet>(target: &mut P, loaded: Vec<(String, Matrix)>) -> Result<()> {
    let names: Vec<(String, (usize, usize))> =
        target.named_params().into_iter().map(|(n, m)| (n, m.shape())).collect();
    if names.len() != loaded.len() {
        return Err(Error::Validation(format!(
            "parameter count mismatch: model has {}, file has {}",
            names.len(),
            loaded.len()
        )));
    }
    for ((name, shape), (lname, lm)) in names.iter().zip(&loaded) {
        if name != lname || *shape != lm.shape() {
            return Err(Error::Validation(format!(
                "parameter mismatch: model {name} {shape:?}, file {lname} {:?}",
                lm.shape()
            )));
        }
    }
    for (slot, (_, m)) in target.params_mut().into_iter().zip(loaded) {
        *slot = m;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::kernel::nn::FfnParams;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = FfnParams::init(4, 6, 3, &mut rng);
        save_params(dir.path(), &p.named_params(), serde_json::json!({"seed": 9})).unwrap();
        let (loaded, meta) = load_params(dir.path()).unwrap();
        assert_eq!(meta["seed"], 9);
        let mut q = FfnParams::init(4, 6, 3, &mut ChaCha8Rng::seed_from_u64(10));
        assign_params(&mut q, loaded).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = FfnParams::init(4, 6, 3, &mut rng);
        save_params(dir.path(), &p.named_params(), serde_json::Value::Null).unwrap();
        let (loaded, _) = load_params(dir.path()).unwrap();
        let mut q = FfnParams::init(4, 5, 3, &mut rng);
        assert!(assign_params(&mut q, loaded).is_err());
    }
}

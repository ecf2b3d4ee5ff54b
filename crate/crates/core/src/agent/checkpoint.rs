//! Single-file checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "PLAYCKPT"
//! length   u64      byte length of the manifest
//! manifest JSON     model, hyperparameters, step counter, seed, array list
//! data     f64 LE   per manifest array: values, then Adam m, then Adam v
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::params::{Group, Hyperparams, ParamArray, ParamSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PLAYCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    group: Group,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    model: Model,
    hyper: Hyperparams,
    step: u64,
    seed: u64,
    arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub params: ParamSet,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format { kind: "checkpoint", msg: msg.into() }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.model.check_params(&self.params)?;
        let manifest = Manifest {
            version: VERSION,
            model: self.model,
            hyper: self.hyper.clone(),
            step: self.params.step,
            seed: self.seed,
            arrays: self
                .params
                .arrays
                .iter()
                .map(|a| ArrayEntry {
                    name: a.name.clone(),
                    group: a.group,
                    shape: a.shape.clone(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let n_floats: usize = self.params.arrays.iter().map(|a| 3 * a.len()).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * n_floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.params.arrays {
            for x in a.values.iter().chain(&a.m).chain(&a.v) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic header"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(json)?;
        if manifest.version != VERSION {
            return Err(bad(format!("unsupported version {}", manifest.version)));
        }
        let mut data = bytes[16 + len..].chunks_exact(8);
        if !data.remainder().is_empty() {
            return Err(bad("trailing partial float"));
        }
        let mut take = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| {
                    data.next()
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .ok_or_else(|| bad("truncated data section"))
                })
                .collect()
        };
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for entry in &manifest.arrays {
            let n: usize = entry.shape.iter().product();
            let mut arr = ParamArray::new(&entry.name, entry.group, entry.shape.clone(), take(n)?);
            arr.m = take(n)?;
            arr.v = take(n)?;
            arrays.push(arr);
        }
        if data.next().is_some() {
            return Err(bad("data section longer than the manifest describes"));
        }
        let params = ParamSet { arrays, step: manifest.step };
        manifest.model.check_params(&params)?;
        Ok(Checkpoint {
            model: manifest.model,
            hyper: manifest.hyper,
            seed: manifest.seed,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

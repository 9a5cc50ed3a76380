//! Self-describing parameter checkpoints: named arrays with shapes, a dtype
//! tag and a format version, plus free-form model metadata.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f64";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dtype: String,
    /// Model kind, e.g. `"listener"` or `"speaker"`.
    pub kind: String,
    pub meta: serde_json::Value,
    pub arrays: Vec<ArrayRecord>,
}

impl Checkpoint {
    pub fn new(kind: &str, meta: serde_json::Value, params: &ParamSet) -> Self {
        let arrays = params
            .iter()
            .map(|(_, p)| ArrayRecord {
                name: p.name.clone(),
                shape: [p.value.rows(), p.value.cols()],
                data: p.value.data().to_vec(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            dtype: DTYPE.to_string(),
            kind: kind.to_string(),
            meta,
            arrays,
        }
    }

    pub fn params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        for a in &self.arrays {
            let [rows, cols] = a.shape;
            if rows * cols != a.data.len() {
                return Err(Error::Checkpoint(format!(
                    "array `{}` has {} values for shape {rows}x{cols}",
                    a.name,
                    a.data.len()
                )));
            }
            if set.id(&a.name).is_some() {
                return Err(Error::Checkpoint(format!("duplicate array `{}`", a.name)));
            }
            set.add(a.name.clone(), Tensor::from_vec(rows, cols, a.data.clone()));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path.to_path_buf()));
        }
        let ckpt: Self = serde_json::from_slice(&fs::read(path)?)?;
        if ckpt.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        if ckpt.dtype != DTYPE {
            return Err(Error::Checkpoint(format!(
                "unsupported dtype `{}`",
                ckpt.dtype
            )));
        }
        Ok(ckpt)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )))
        }
    }
}

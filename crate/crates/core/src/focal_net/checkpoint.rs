//! JSON parameter checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{FocalDepthModel, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::FeatureStack;

pub const CHECKPOINT_FORMAT: &str = "focaldepth-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    /// `[channels, height, width]`.
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &FocalDepthModel) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: *model.config(),
            tensors: model
                .parameters()
                .iter()
                .map(|p| {
                    let (c, h, w) = p.value.shape();
                    TensorRecord {
                        name: p.name.clone(),
                        shape: [c, h, w],
                        data: p.value.data().to_vec(),
                    }
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<FocalDepthModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::State(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        let tensors = self
            .tensors
            .into_iter()
            .map(|t| {
                let [c, h, w] = t.shape;
                Ok((t.name, FeatureStack::new(c, h, w, t.data)?))
            })
            .collect::<Result<Vec<_>>>()?;
        FocalDepthModel::from_parameters(self.config, tensors)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

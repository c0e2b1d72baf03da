use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::pauli::ORDERING_TAG;

pub const CHECKPOINT_FORMAT: &str = "qdss-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model: architecture (with the channel tensor for QDSeq), flat
/// parameters, seed and the generator ordering the angles refer to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelSpec,
    pub params: Vec<f64>,
    pub seed: u64,
    pub basis_ordering: String,
}

impl Checkpoint {
    pub fn from_model(model: &Model, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.spec(),
            params: model.params().values().to_vec(),
            seed,
            basis_ordering: ORDERING_TAG.into(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::ConfigMismatch(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.basis_ordering != ORDERING_TAG {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint uses generator ordering {:?}, expected {ORDERING_TAG:?}",
                self.basis_ordering
            )));
        }
        Model::with_params(&self.model, self.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

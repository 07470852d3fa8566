use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, NetsError, ParamId};
use crate::diffcore::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Optimizer state saved next to the weights so training can resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub step: u64,
    pub first_moment: BTreeMap<String, Vec<f64>>,
    pub second_moment: BTreeMap<String, Vec<f64>>,
}

/// On-disk JSON document. Floats are written in shortest round-trip form, so
/// save/load reproduces every weight bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub params: BTreeMap<String, NamedArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainer_state: Option<TrainerState>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, trainer_state: Option<TrainerState>) -> Self {
        let arrays = params
            .iter()
            .map(|(id, t)| {
                (
                    id.name().to_string(),
                    NamedArray {
                        shape: t.shape().to_vec(),
                        values: t.data().to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model_config: *params.config(),
            params: arrays,
            trainer_state,
        }
    }

    pub fn to_params(&self) -> Result<ModelParams, NetsError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(NetsError::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if let Some(extra) = self.params.keys().find(|k| ParamId::from_name(k).is_none()) {
            return Err(NetsError::Checkpoint(format!(
                "unknown parameter {extra:?}"
            )));
        }
        let tensors = ParamId::ALL
            .iter()
            .map(|id| {
                let arr = self.params.get(id.name()).ok_or_else(|| {
                    NetsError::Checkpoint(format!("missing parameter {:?}", id.name()))
                })?;
                Tensor::new(arr.shape.clone(), arr.values.clone()).map_err(NetsError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        ModelParams::from_tensors(self.model_config, tensors)
    }

    pub fn to_json(&self) -> Result<String, NetsError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetsError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetsError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetsError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

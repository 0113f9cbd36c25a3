//! JSON checkpoints: configuration, parameter tensors as base64 of
//! little-endian `f64`, and optionally the optimizer and loop position.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::optim::OptimizerState;
use super::{Config, Progress};
use crate::aet_net::SeparatorParams;
use crate::diff_engine::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedTensor {
    pub shape: Vec<usize>,
    pub data: String,
}

impl EncodedTensor {
    pub fn encode(t: &Tensor) -> Self {
        let mut bytes = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        EncodedTensor {
            shape: t.shape().to_vec(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> std::result::Result<Tensor, String> {
        let bytes = STANDARD.decode(&self.data).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("{} bytes is not a whole number of f64", bytes.len()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(self.shape.clone(), data).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSnapshot {
    pub steps: u64,
    pub first: BTreeMap<String, EncodedTensor>,
    pub second: BTreeMap<String, EncodedTensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: Config,
    pub tensors: BTreeMap<String, EncodedTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<Progress>,
}

fn encode_map(m: &BTreeMap<String, Tensor>) -> BTreeMap<String, EncodedTensor> {
    m.iter().map(|(k, v)| (k.clone(), EncodedTensor::encode(v))).collect()
}

impl Checkpoint {
    pub fn new(config: &Config, params: &SeparatorParams) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config: config.clone(),
            tensors: encode_map(params.tensors()),
            cost_scales: None,
            optimizer: None,
            progress: None,
        }
    }

    pub fn with_optimizer(mut self, state: &OptimizerState) -> Self {
        self.optimizer = Some(OptimizerSnapshot {
            steps: state.steps,
            first: encode_map(&state.first),
            second: encode_map(&state.second),
        });
        self
    }

    pub fn params(&self, path: &Path) -> Result<SeparatorParams> {
        let tensors = decode_map(&self.tensors, path)?;
        SeparatorParams::from_tensors(self.config.network.clone(), tensors)
            .map_err(|e| Error::corrupt(path, e))
    }

    pub fn optimizer_state(&self, path: &Path) -> Result<OptimizerState> {
        Ok(match &self.optimizer {
            None => OptimizerState::default(),
            Some(s) => OptimizerState {
                steps: s.steps,
                first: decode_map(&s.first, path)?,
                second: decode_map(&s.second, path)?,
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::corrupt(path, e))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "{}: format version {v}, this build reads {FORMAT_VERSION}",
                    path.display()
                )))
            }
            None => return Err(Error::corrupt(path, "missing format_version")),
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::corrupt(path, e))?;
        // Decode once up front so a bad payload fails at load time.
        ckpt.params(path)?;
        ckpt.optimizer_state(path)?;
        Ok(ckpt)
    }
}

fn decode_map(m: &BTreeMap<String, EncodedTensor>, path: &Path) -> Result<BTreeMap<String, Tensor>> {
    m.iter()
        .map(|(k, v)| {
            v.decode()
                .map(|t| (k.clone(), t))
                .map_err(|e| Error::corrupt(path, format!("tensor `{k}`: {e}")))
        })
        .collect()
}

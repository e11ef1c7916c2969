use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::trainer::TrainConfig;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Mode, Model, ModelConfig, ModelParams};
use crate::numerics::Tensor;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointVocabs {
    pub src: Vocabulary,
    pub tgt: Vocabulary,
    pub graph: Option<Vocabulary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabHashes {
    pub src: String,
    pub tgt: String,
    pub graph: Option<String>,
}

impl CheckpointVocabs {
    pub fn hashes(&self) -> VocabHashes {
        VocabHashes {
            src: self.src.fingerprint(),
            tgt: self.tgt.fingerprint(),
            graph: self.graph.as_ref().map(Vocabulary::fingerprint),
        }
    }
}

/// Everything needed to resume training or to translate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub mode: Mode,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub vocab_hashes: VocabHashes,
    pub vocabs: CheckpointVocabs,
    pub params: Vec<NamedTensor>,
    pub optimizer: AdamState,
    pub best_dev_loss: Option<f64>,
    /// Completed epochs.
    pub epoch: u64,
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Checkpoint {
    pub fn new(
        model: &Model,
        training: TrainConfig,
        vocabs: CheckpointVocabs,
        optimizer: AdamState,
        best_dev_loss: Option<f64>,
        epoch: u64,
    ) -> Self {
        let params = model
            .params
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        Checkpoint {
            schema_version: SCHEMA_VERSION,
            mode: model.config.mode,
            model: model.config.clone(),
            training,
            vocab_hashes: vocabs.hashes(),
            vocabs,
            params,
            optimizer,
            best_dev_loss,
            epoch,
        }
    }

    pub fn model(&self) -> Result<Model> {
        let mut map = BTreeMap::new();
        for p in &self.params {
            map.insert(p.name.clone(), Tensor::new(p.shape.clone(), p.data.clone())?);
        }
        Model::from_parts(self.model.clone(), ModelParams::from_map(map))
    }

    /// Compact JSON with a trailing `checksum` field: the SHA-256 of the
    /// document serialized without it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut value = serde_json::to_value(self)?;
        let body = serde_json::to_string(&value)?;
        value
            .as_object_mut()
            .expect("checkpoint serializes to an object")
            .insert("checksum".into(), digest(&body).into());
        let text = serde_json::to_string(&value)?;
        // write then rename so a crash never leaves a half-written file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptCheckpoint {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| corrupt("not a JSON object".into()))?;
        let stored = obj
            .remove("checksum")
            .and_then(|v| v.as_str().map(str::to_string))
            .ok_or_else(|| corrupt("missing checksum".into()))?;
        let version = obj
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("missing schema_version".into()))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION,
                found: version as u32,
            });
        }
        if digest(&serde_json::to_string(&value)?) != stored {
            return Err(corrupt("checksum mismatch".into()));
        }
        serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))
    }

    /// Loads and checks that the checkpoint was trained in `mode`.
    pub fn load_for(path: &Path, mode: Mode) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.mode != mode {
            return Err(Error::ModeMismatch {
                expected: mode.to_string(),
                found: ck.mode.to_string(),
            });
        }
        Ok(ck)
    }
}

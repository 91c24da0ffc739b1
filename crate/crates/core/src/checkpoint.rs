//! Versioned, checksummed checkpoint files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, EmotionTaxonomy};
use crate::encoder::{ParamSnapshot, RetrofitModel};
use crate::trainer::{TrainConfig, TrainHistory};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "emoretrofit-ckpt-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub steps: usize,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub final_train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub engine_version: String,
    pub config: TrainConfig,
    pub taxonomy: EmotionTaxonomy,
    pub d_base: usize,
    pub params: ParamSnapshot,
    pub history: HistorySummary,
    /// Resolved job configuration of the producing command, if any.
    #[serde(default)]
    pub job: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: String,
    checksum: String,
    payload: serde_json::Value,
}

impl Checkpoint {
    pub fn new(
        config: &TrainConfig,
        corpus: &Corpus,
        model: &RetrofitModel,
        history: &TrainHistory,
    ) -> Self {
        Self {
            engine_version: crate::ENGINE_VERSION.to_string(),
            config: config.clone(),
            taxonomy: corpus.taxonomy().clone(),
            d_base: corpus.d_base(),
            params: model.snapshot(),
            history: history.summary(),
            job: None,
        }
    }

    pub fn model(&self) -> Result<RetrofitModel> {
        let m = RetrofitModel::from_snapshot(&self.params)?;
        if m.d_base() != self.d_base {
            return Err(Error::Corrupt(format!(
                "parameters have dimension {}, header says {}",
                m.d_base(),
                self.d_base
            )));
        }
        Ok(m)
    }

    /// SHA-256 of the parameter values, for identifying a checkpoint.
    pub fn params_digest(&self) -> Vec<u8> {
        let mut h = Sha256::new();
        for v in &self.params.values {
            h.update(v.to_le_bytes());
        }
        h.finalize().to_vec()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let payload = serde_json::to_value(self).map_err(|e| Error::Corrupt(e.to_string()))?;
        let envelope = Envelope {
            format_version: CHECKPOINT_FORMAT.to_string(),
            checksum: digest(&payload),
            payload,
        };
        let mut bytes =
            serde_json::to_vec(&envelope).map_err(|e| Error::Corrupt(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::Corrupt(format!("unreadable checkpoint: {e}")))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Corrupt("missing format_version".into()))?;
        if found != CHECKPOINT_FORMAT {
            return Err(Error::Version {
                expected: CHECKPOINT_FORMAT.into(),
                found: found.into(),
            });
        }
        let envelope: Envelope =
            serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
        if digest(&envelope.payload) != envelope.checksum {
            return Err(Error::Corrupt("checksum mismatch".into()));
        }
        serde_json::from_value(envelope.payload).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn digest(payload: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(payload).expect("json values serialize");
    hex::encode(Sha256::digest(&bytes))
}

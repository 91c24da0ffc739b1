//! Job configuration: one TOML document, every section optional.
//!
//! ```toml
//! delta_threshold = 0.1
//!
//! [train]
//! epochs = 30
//! lr = 1e-3
//! [train.loss]
//! temperature = 0.1
//! lambda = 0.05
//! memory = 512
//! [train.model]
//! head = "mlp"
//!
//! [eval]
//! knn_k = 5
//!
//! [grid]
//! lambda = [0.01, 0.05]
//!
//! [fewshot]
//! sizes = [20, 50, 100, 500]
//!
//! [synthetic]
//! classes = 28
//! ```
//!
//! Command-line flags are applied on top of the file. The merged result is
//! what gets embedded in artifacts.

use std::path::Path;

use anyhow::{Context, Result};
use emoretrofit::eval::EvalConfig;
use emoretrofit::selection::SweepGrid;
use emoretrofit::synthetic::SyntheticSpec;
use emoretrofit::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FewShotConfig {
    pub sizes: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl Default for FewShotConfig {
    fn default() -> Self {
        Self {
            sizes: vec![20, 50, 100, 500],
            k: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub grid: SweepGrid,
    pub fewshot: FewShotConfig,
    pub synthetic: SyntheticSpec,
    /// Largest admissible Δ_emb during selection.
    pub delta_threshold: f64,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            grid: SweepGrid::default(),
            fewshot: FewShotConfig::default(),
            synthetic: SyntheticSpec::default(),
            delta_threshold: 0.1,
        }
    }
}

impl JobConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let job: JobConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(job)
    }

    /// The resolved configuration as embedded in artifacts.
    pub fn to_value(&self, command: &str) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self).context("serialising job config")?;
        v["command"] = command.into();
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use emoretrofit::encoder::HeadKind;

    #[test]
    fn partial_file_keeps_defaults() {
        let job: JobConfig = toml::from_str(
            "delta_threshold = 0.2\n[train.loss]\nlambda = 2.0\n[train.model]\nhead = \"identity\"\n",
        )
        .unwrap();
        assert_eq!(job.delta_threshold, 0.2);
        assert_eq!(job.train.loss.lambda, 2.0);
        assert_eq!(job.train.model.head, HeadKind::Identity);
        assert_eq!(job.train.loss.temperature, 0.1);
        assert_eq!(job.eval, EvalConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<JobConfig>("[train]\nepoch = 3\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let job = JobConfig::default();
        let text = toml::to_string(&job).unwrap();
        assert_eq!(toml::from_str::<JobConfig>(&text).unwrap(), job);
    }
}

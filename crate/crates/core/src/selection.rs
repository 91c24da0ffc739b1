//! Hyperparameter grid sweep and best-configuration selection.
//!
//! Selection first keeps runs whose embedding drift stays under a threshold,
//! then takes the highest AMI among them.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::encoder::HeadKind;
use crate::eval::{evaluate_checkpoint, EvalConfig, EvalReport};
use crate::sampler::SamplerKind;
use crate::trainer::{train, TrainConfig};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub temperature: Vec<f64>,
    pub lambda: Vec<f64>,
    pub memory: Vec<usize>,
    pub head: Vec<HeadKind>,
    pub lr: Vec<f64>,
    pub sampler: Vec<SamplerKind>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            temperature: vec![0.05, 0.1, 0.2],
            lambda: vec![0.01, 0.05, 0.1, 0.5],
            memory: vec![512, 1024, 2048],
            head: vec![HeadKind::Identity, HeadKind::Linear, HeadKind::Mlp],
            lr: vec![5e-6, 1e-5],
            sampler: vec![SamplerKind::MPerClass, SamplerKind::Stratified],
        }
    }
}

fn sampler_tag(kind: SamplerKind) -> &'static str {
    match kind {
        SamplerKind::MPerClass => "mperclass",
        SamplerKind::Stratified => "stratified",
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("temperature", self.temperature.len()),
            ("lambda", self.lambda.len()),
            ("memory", self.memory.len()),
            ("head", self.head.len()),
            ("lr", self.lr.len()),
            ("sampler", self.sampler.len()),
        ];
        for (axis, len) in sizes {
            if len == 0 {
                return Err(Error::Config(format!("sweep axis {axis} is empty")));
            }
        }
        Ok(())
    }

    /// Every Cartesian combination applied over `base`, with stable ids.
    pub fn combinations(&self, base: &TrainConfig) -> Vec<(String, TrainConfig)> {
        let mut out = Vec::new();
        for &sampler in &self.sampler {
            for &head in &self.head {
                for &temperature in &self.temperature {
                    for &lambda in &self.lambda {
                        for &memory in &self.memory {
                            for &lr in &self.lr {
                                let mut c = base.clone();
                                c.sampler.kind = sampler;
                                c.model.head = head;
                                c.loss.temperature = temperature;
                                c.loss.lambda = lambda;
                                c.loss.memory = memory;
                                c.lr = lr;
                                let id = format!(
                                    "{}_{head}_tau{temperature}_lambda{lambda}_mem{memory}_lr{lr:e}",
                                    sampler_tag(sampler)
                                );
                                out.push((id, c));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Best configuration reported for the BERT-based retrofit.
pub fn bert_emo_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.sampler.kind = SamplerKind::MPerClass;
    c.sampler.batch_size = 64;
    c.loss.lambda = 0.05;
    c.loss.temperature = 0.05;
    c.loss.memory = 1024;
    c.model.head = HeadKind::Linear;
    c.lr = 5e-6;
    c
}

/// Best configuration reported for the RoBERTa-based retrofit.
pub fn roberta_emo_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.sampler.kind = SamplerKind::MPerClass;
    c.sampler.batch_size = 64;
    c.loss.lambda = 0.01;
    c.loss.temperature = 0.1;
    c.loss.memory = 512;
    c.model.head = HeadKind::Mlp;
    c.lr = 5e-6;
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_id: String,
    pub report: EvalReport,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_id: String,
    pub status: RunStatus,
    pub checkpoint: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub engine_version: String,
    pub job: Option<serde_json::Value>,
    pub runs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Corrupt(format!("manifest: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| Error::Corrupt(e.to_string()))?;
        bytes.push(b'\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn completed(&self) -> Vec<RunResult> {
        self.runs
            .iter()
            .filter(|r| r.status == RunStatus::Completed)
            .filter_map(|r| {
                Some(RunResult {
                    config_id: r.config_id.clone(),
                    report: r.report.clone()?,
                    checkpoint: r.checkpoint.clone()?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub eval: EvalConfig,
    /// Split on which selection metrics are computed.
    pub split: Split,
    pub out_dir: PathBuf,
    pub job: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub results: Vec<RunResult>,
    /// Runs trained by this invocation (excludes resumed ones).
    pub trained: usize,
    pub failed: usize,
}

fn run_one(
    corpus: &Corpus,
    id: &str,
    config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<(PathBuf, PathBuf, EvalReport)> {
    let dir = opts.out_dir.join(id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (mut ckpt, history) = train(corpus, config)?;
    ckpt.job = opts.job.clone();
    let ckpt_path = dir.join("checkpoint.json");
    ckpt.save(&ckpt_path)?;
    history.save(&dir.join("history.jsonl"), opts.job.as_ref())?;
    let report = evaluate_checkpoint(Some(&ckpt), corpus, opts.split, &opts.eval)?;
    let report_path = dir.join("report.json");
    let doc = serde_json::json!({
        "engine_version": crate::ENGINE_VERSION,
        "job": opts.job,
        "config_id": id,
        "report": report,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Corrupt(e.to_string()))?;
    fs::write(&report_path, text + "\n").map_err(|e| Error::io(&report_path, e))?;
    Ok((ckpt_path, report_path, report))
}

/// Trains and evaluates every grid combination, skipping ids already
/// completed in an existing manifest. Failed runs are recorded and the
/// sweep moves on.
pub fn sweep(
    corpus: &Corpus,
    grid: &SweepGrid,
    base: &TrainConfig,
    opts: &SweepOptions,
) -> Result<SweepOutcome> {
    grid.validate()?;
    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let manifest_path = opts.out_dir.join(MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() {
        Manifest::load(&manifest_path)?
    } else {
        Manifest {
            engine_version: crate::ENGINE_VERSION.to_string(),
            job: opts.job.clone(),
            runs: Vec::new(),
        }
    };
    let mut trained = 0;
    let mut failed = 0;
    for (id, config) in grid.combinations(base) {
        let done = manifest
            .runs
            .iter()
            .any(|r| r.config_id == id && r.status == RunStatus::Completed);
        if done {
            log::info!("skipping completed run {id}");
            continue;
        }
        manifest.runs.retain(|r| r.config_id != id);
        let entry = match run_one(corpus, &id, &config, opts) {
            Ok((ckpt, report_path, report)) => {
                trained += 1;
                ManifestEntry {
                    config_id: id,
                    status: RunStatus::Completed,
                    checkpoint: Some(ckpt),
                    report_path: Some(report_path),
                    report: Some(report),
                    error: None,
                }
            }
            Err(e) => {
                log::warn!("run {id} failed: {e}");
                failed += 1;
                ManifestEntry {
                    config_id: id,
                    status: RunStatus::Failed,
                    checkpoint: None,
                    report_path: None,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        };
        manifest.runs.push(entry);
        manifest.save(&manifest_path)?;
    }
    Ok(SweepOutcome {
        results: manifest.completed(),
        trained,
        failed,
    })
}

fn rank(a: &RunResult, b: &RunResult) -> Ordering {
    // Greater is better: higher AMI, then lower drift, then smaller id.
    a.report
        .ami
        .total_cmp(&b.report.ami)
        .then(b.report.delta_emb.total_cmp(&a.report.delta_emb))
        .then(b.config_id.cmp(&a.config_id))
}

/// Keeps runs with `delta_emb < delta_threshold`, then returns the id with
/// the highest AMI.
pub fn select_best(results: &[RunResult], delta_threshold: f64) -> Result<String> {
    if results.is_empty() {
        return Err(Error::Empty("no run results to select from".into()));
    }
    results
        .iter()
        .filter(|r| r.report.delta_emb < delta_threshold)
        .max_by(|a, b| rank(a, b))
        .map(|r| r.config_id.clone())
        .ok_or(Error::NoSurvivor {
            threshold: delta_threshold,
        })
}

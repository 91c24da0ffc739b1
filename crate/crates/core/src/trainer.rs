//! The retrofitting loop.
//!
//! Per step: sample a batch, encode it in train mode, project, contrast the
//! projections against the batch and the cross-batch memory, add the
//! weighted preservation penalty, backpropagate, take an AdamW step, then
//! enqueue the batch projections. Per epoch: full validation pass in eval
//! mode (no memory), early stopping on validation loss, keep the best model.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, HistorySummary};
use crate::corpus::{Corpus, Split};
use crate::encoder::{ModelConfig, RetrofitModel, ENCODER_TENSORS};
use crate::loss::{scl_loss, total_loss, vsp_loss, ContrastBank, LossConfig, XbmMemory};
use crate::optim::{lr_schedule, AdamW, AdamWConfig};
use crate::rng;
use crate::sampler::{self, SamplerConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Peak learning rate.
    pub lr: f64,
    /// Peak learning rate of the projection head; `None` shares `lr`.
    ///
    /// The raised desk `lr` suits the small residual encoder. Applied to
    /// the head as well, the head alone fits the contrastive objective and
    /// the encoder never moves, so by default the head keeps the small rate
    /// a head on top of a large pre-trained encoder would get.
    pub head_lr: Option<f64>,
    pub weight_decay: f64,
    /// Warmup length in optimizer steps.
    pub warmup: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Hard cap on optimizer steps.
    pub max_steps: Option<usize>,
    pub loss: LossConfig,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            head_lr: Some(5e-6),
            weight_decay: 0.01,
            warmup: 3,
            patience: 5,
            seed: 0,
            max_steps: None,
            loss: LossConfig::default(),
            sampler: SamplerConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(h) = self.head_lr {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::Config(format!("head lr must be positive, got {h}")));
            }
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        self.loss.validate()?;
        self.sampler.validate()
    }

    pub fn batch_size(&self) -> usize {
        self.sampler.batch_size
    }

    /// Sets both the training and sampler seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sampler.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub scl: f64,
    pub vsp: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_scl: f64,
    pub val_vsp: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn summary(&self) -> HistorySummary {
        let best = self.best_epoch.map(|e| self.epochs[e].val_loss);
        HistorySummary {
            steps: self.steps.len(),
            epochs: self.epochs.len(),
            best_epoch: self.best_epoch,
            best_val_loss: best,
            final_train_loss: self.steps.last().map(|s| s.loss),
        }
    }

    /// One JSON object per line: a header, then steps, epochs, and a summary.
    pub fn write_jsonl(&self, w: &mut impl Write, job: Option<&serde_json::Value>) -> std::io::Result<()> {
        let header = serde_json::json!({
            "kind": "header",
            "engine_version": crate::ENGINE_VERSION,
            "job": job,
        });
        writeln!(w, "{header}")?;
        for s in &self.steps {
            let mut v = serde_json::to_value(s)?;
            v["kind"] = "step".into();
            writeln!(w, "{v}")?;
        }
        for e in &self.epochs {
            let mut v = serde_json::to_value(e)?;
            v["kind"] = "epoch".into();
            writeln!(w, "{v}")?;
        }
        let mut v = serde_json::to_value(self.summary())?;
        v["kind"] = "summary".into();
        writeln!(w, "{v}")
    }

    pub fn save(&self, path: &Path, job: Option<&serde_json::Value>) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_jsonl(&mut w, job).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loss terms for one batch plus the parameter gradient of the total.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub scl: f64,
    pub vsp: f64,
    pub total: f64,
    pub grad: RetrofitModel,
    /// Detached projections, for the memory.
    pub projected: Vec<Vec<f64>>,
}

/// Forward and backward for `L = L_scl + λ·L_vsp` on one batch.
///
/// The frozen reference encoder is the identity on base embeddings, so the
/// preservation term compares `Enc(x_i)` with `x_i`.
pub fn batch_loss<R: rand::Rng>(
    model: &RetrofitModel,
    inputs: &[&[f64]],
    labels: &[usize],
    memory: Option<&XbmMemory>,
    loss: &LossConfig,
    dropout: Option<&mut R>,
) -> Result<BatchLoss> {
    let pass = model.forward(inputs, dropout)?;
    let z = pass.projected();
    let u = pass.encoded();
    let bank = ContrastBank::new(&z, labels, memory)?;
    let scl = scl_loss(&bank, loss.temperature)?;
    let vsp = vsp_loss(&u, pass.inputs())?;
    let du: Vec<Vec<f64>> = vsp
        .grad
        .iter()
        .map(|g| g.iter().map(|x| x * loss.lambda).collect())
        .collect();
    let grad = model.backward(&pass, &scl.grad, &du)?;
    Ok(BatchLoss {
        scl: scl.value,
        vsp: vsp.value,
        total: total_loss(scl.value, vsp.value, loss.lambda),
        grad,
        projected: z,
    })
}

fn validation_loss(
    model: &RetrofitModel,
    corpus: &Corpus,
    val: &[usize],
    loss: &LossConfig,
) -> Result<EpochRecord> {
    let inputs: Vec<&[f64]> = val.iter().map(|&i| corpus.record(i).base.as_slice()).collect();
    let labels: Vec<usize> = val.iter().map(|&i| corpus.record(i).label).collect();
    let pass = model.forward(&inputs, None::<&mut rand_chacha::ChaCha8Rng>)?;
    let z = pass.projected();
    let bank = ContrastBank::new(&z, &labels, None)?;
    let scl = scl_loss(&bank, loss.temperature)?.value;
    let vsp = vsp_loss(&pass.encoded(), pass.inputs())?.value;
    Ok(EpochRecord {
        epoch: 0,
        val_scl: scl,
        val_vsp: vsp,
        val_loss: total_loss(scl, vsp, loss.lambda),
    })
}

/// Runs the retrofitting loop and returns the best-validation checkpoint.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<(Checkpoint, TrainHistory)> {
    config.validate()?;
    let train_idx = corpus.indices_in(Split::Train);
    let val_idx = corpus.indices_in(Split::Val);
    if train_idx.is_empty() {
        return Err(Error::Empty("train split".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    let mut model = RetrofitModel::new(&config.model, corpus.d_base(), config.seed)?;
    let mut history = TrainHistory::default();
    let per_epoch = sampler::batches_per_epoch(train_idx.len(), config.batch_size());
    let planned = config.epochs * per_epoch;
    let total_steps = config.max_steps.map_or(planned, |m| m.min(planned));
    if total_steps == 0 {
        return Ok((Checkpoint::new(config, corpus, &model, &history), history));
    }
    let warmup = config.warmup.min(total_steps - 1);

    let adamw = AdamWConfig {
        weight_decay: config.weight_decay,
        ..Default::default()
    };
    let enc_params = model.encoder_params();
    let mut enc_opt = AdamW::new(adamw, enc_params);
    let mut head_opt = AdamW::new(adamw, model.num_params() - enc_params);
    let head_scale = config.head_lr.map_or(1.0, |h| h / config.lr);
    let mut memory = XbmMemory::new(config.loss.memory);
    let mut best: Option<(f64, RetrofitModel)> = None;
    let mut since_best = 0;
    let mut step = 0;

    'epochs: for epoch in 0..config.epochs {
        for batch in sampler::batches(corpus, &config.sampler, epoch)? {
            if step == total_steps {
                break 'epochs;
            }
            let inputs: Vec<&[f64]> = batch
                .indices
                .iter()
                .map(|&i| corpus.record(i).base.as_slice())
                .collect();
            let labels: Vec<usize> = batch.indices.iter().map(|&i| corpus.record(i).label).collect();
            let mut drop_rng = rng::stream(config.seed, rng::DOMAIN_DROPOUT, step as u64);
            let out = batch_loss(
                &model,
                &inputs,
                &labels,
                Some(&memory),
                &config.loss,
                Some(&mut drop_rng),
            )
            .map_err(|e| match e {
                Error::ZeroNorm(what) => Error::Numeric {
                    step,
                    what: format!("zero-norm vector in {what}"),
                },
                other => other,
            })?;
            if !out.total.is_finite() {
                return Err(Error::Numeric {
                    step,
                    what: format!("loss is {}", out.total),
                });
            }
            let lr = lr_schedule(step, total_steps, config.lr, warmup)?;
            let grads = out.grad.tensors();
            let grad_slices: Vec<&[f64]> = grads.iter().map(|t| t.2).collect();
            let mut params = model.tensors_mut();
            let (enc_p, head_p) = params.split_at_mut(ENCODER_TENSORS);
            let (enc_g, head_g) = grad_slices.split_at(ENCODER_TENSORS);
            enc_opt
                .step(enc_p, enc_g, lr)
                .and_then(|()| head_opt.step(head_p, head_g, lr * head_scale))
                .map_err(|e| match e {
                    Error::Numeric { what, .. } => Error::Numeric { step, what },
                    other => other,
                })?;
            memory.update(&out.projected, &labels);
            history.steps.push(StepRecord {
                step,
                epoch,
                lr,
                scl: out.scl,
                vsp: out.vsp,
                loss: out.total,
            });
            step += 1;
        }

        let mut rec = validation_loss(&model, corpus, &val_idx, &config.loss)?;
        rec.epoch = epoch;
        if !rec.val_loss.is_finite() {
            return Err(Error::Numeric {
                step,
                what: format!("validation loss is {}", rec.val_loss),
            });
        }
        history.epochs.push(rec);
        log::debug!("epoch {epoch}: val loss {:.6}", rec.val_loss);
        if best.as_ref().is_none_or(|(b, _)| rec.val_loss < *b) {
            best = Some((rec.val_loss, model.clone()));
            history.best_epoch = Some(history.epochs.len() - 1);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    // A step cap can end training mid-epoch; validate that partial epoch too.
    if history.epochs.is_empty() || history.steps.last().map(|s| s.epoch) != history.epochs.last().map(|e| e.epoch) {
        let mut rec = validation_loss(&model, corpus, &val_idx, &config.loss)?;
        rec.epoch = history.steps.last().map_or(0, |s| s.epoch);
        history.epochs.push(rec);
        if best.as_ref().is_none_or(|(b, _)| rec.val_loss < *b) {
            best = Some((rec.val_loss, model.clone()));
            history.best_epoch = Some(history.epochs.len() - 1);
        }
    }

    let best_model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((Checkpoint::new(config, corpus, &best_model, &history), history))
}

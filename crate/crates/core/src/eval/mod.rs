//! Emotion-awareness evaluation of a retrofit.
//!
//! A split is embedded through the encoder (eval mode) and probed with
//! k-means clustering indices, retrieval metrics, drift from the base
//! embeddings and, optionally, a KNN classifier fit on the train split.

pub mod cluster;
pub mod kmeans;
pub mod knn;
pub mod retrieval;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alloc::largest_remainder;
use crate::checkpoint::Checkpoint;
use crate::corpus::{Corpus, Split};
use crate::encoder::RetrofitModel;
use crate::linalg::{cosine, norm};
use crate::rng;
use crate::{Error, Result};

pub use cluster::{ami, ari, fms};
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use knn::{knn_classify, KnnOutcome};
pub use retrieval::{retrieval_metrics, RetrievalScores};

/// Row-aligned embeddings, labels and ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>, ids: Vec<String>) -> Result<Self> {
        if vectors.len() != labels.len() || vectors.len() != ids.len() {
            return Err(Error::Shape(format!(
                "{} vectors, {} labels, {} ids",
                vectors.len(),
                labels.len(),
                ids.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                id: "<embedding set>".into(),
            });
        }
        Ok(Self {
            vectors,
            labels,
            ids,
        })
    }

    /// Base embeddings of the given records.
    pub fn base(corpus: &Corpus, indices: &[usize]) -> Self {
        Self::encoded(corpus, indices, None).expect("identity encoding cannot fail")
    }

    /// Embeddings of the given records through `model` (eval mode), or the
    /// base embeddings when `model` is `None`.
    pub fn encoded(corpus: &Corpus, indices: &[usize], model: Option<&RetrofitModel>) -> Result<Self> {
        let mut vectors = Vec::with_capacity(indices.len());
        for &i in indices {
            let base = &corpus.record(i).base;
            vectors.push(match model {
                Some(m) => m.encoder.encode(base)?,
                None => base.clone(),
            });
        }
        Ok(Self {
            vectors,
            labels: indices.iter().map(|&i| corpus.record(i).label).collect(),
            ids: indices.iter().map(|&i| corpus.record(i).id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Mean cosine distance between aligned rows, in `[0, 2]`.
pub fn delta_emb(retro: &EmbeddingSet, base: &EmbeddingSet) -> Result<f64> {
    if retro.len() != base.len() || retro.ids != base.ids {
        return Err(Error::Shape("embedding sets are not row-aligned".into()));
    }
    if retro.is_empty() {
        return Err(Error::Empty("embedding set".into()));
    }
    let mut total = 0.0;
    for (a, b) in retro.vectors.iter().zip(&base.vectors) {
        if a.len() != b.len() {
            return Err(Error::Shape("row dimensions differ".into()));
        }
        if norm(a) == 0.0 || norm(b) == 0.0 {
            return Err(Error::ZeroNorm("delta_emb row"));
        }
        // Identical rows are exactly zero; the cosine can round below one.
        if a != b {
            total += 1.0 - cosine(a, b);
        }
    }
    Ok(total / retro.len() as f64)
}

/// Label-distribution-preserving subsample of `n` train records.
pub fn few_shot_subsample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n < 1 {
        return Err(Error::Config("few-shot size must be at least 1".into()));
    }
    let train = corpus.indices_in(Split::Train);
    if n > train.len() {
        return Err(Error::Config(format!(
            "few-shot size {n} exceeds train split of {}",
            train.len()
        )));
    }
    let groups = corpus.by_class(&train);
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let alloc = largest_remainder(n, &sizes);
    let mut picked = Vec::with_capacity(n);
    for (class, (mut members, take)) in groups.into_iter().zip(alloc).enumerate() {
        members.shuffle(&mut rng::stream(seed, rng::DOMAIN_FEWSHOT, class as u64));
        picked.extend(members.into_iter().take(take));
    }
    picked.sort_unstable();
    Ok(corpus.subset(&picked))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FewShotRow {
    pub size: usize,
    pub knn_micro_f1: f64,
}

/// KNN micro-F1 on `eval_split` with the probe fit on few-shot subsamples of
/// the train split, one row per size. Each size draws its own subsample
/// from `seed`, independently of the other sizes.
pub fn few_shot_knn(
    model: Option<&RetrofitModel>,
    corpus: &Corpus,
    sizes: &[usize],
    k: usize,
    eval_split: Split,
    seed: u64,
) -> Result<Vec<FewShotRow>> {
    let test_idx = corpus.indices_in(eval_split);
    if test_idx.is_empty() {
        return Err(Error::Empty(format!("{eval_split:?} split")));
    }
    let test = EmbeddingSet::encoded(corpus, &test_idx, model)?;
    sizes
        .iter()
        .map(|&size| {
            let shot = few_shot_subsample(corpus, size, seed)?;
            let idx: Vec<usize> = (0..shot.len()).collect();
            let train = EmbeddingSet::encoded(&shot, &idx, model)?;
            let f1 = knn_classify(
                &train.vectors,
                &train.labels,
                &test.vectors,
                &test.labels,
                k.min(train.len()),
            )?
            .micro_f1;
            Ok(FewShotRow {
                size,
                knn_micro_f1: f1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub kmeans: KMeansConfig,
    pub knn_k: usize,
    /// Fit a KNN probe on the train split and report micro-F1.
    pub knn: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            kmeans: KMeansConfig::default(),
            knn_k: 5,
            knn: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub checkpoint: String,
    pub split: Split,
    pub n: usize,
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ami: f64,
    pub ari: f64,
    pub fms: f64,
    pub mrr: f64,
    pub precision_at_1: f64,
    pub map_at_r: f64,
    pub delta_emb: f64,
    pub knn_micro_f1: Option<f64>,
    pub meta: ReportMeta,
}

impl EvalReport {
    /// Checks every field against its admissible range.
    pub fn in_range(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        (-1.0..=1.0).contains(&self.ami)
            && (-1.0..=1.0).contains(&self.ari)
            && unit(self.fms)
            && unit(self.mrr)
            && unit(self.precision_at_1)
            && unit(self.map_at_r)
            && (0.0..=2.0).contains(&self.delta_emb)
            && self.knn_micro_f1.is_none_or(unit)
    }
}

/// Evaluates `model` (or the raw base embeddings) on one split.
pub fn evaluate(
    model: Option<&RetrofitModel>,
    corpus: &Corpus,
    split: Split,
    config: &EvalConfig,
    checkpoint_id: &str,
) -> Result<EvalReport> {
    let idx = corpus.indices_in(split);
    if idx.is_empty() {
        return Err(Error::Empty(format!("{split:?} split")));
    }
    let base = EmbeddingSet::base(corpus, &idx);
    let retro = EmbeddingSet::encoded(corpus, &idx, model)?;
    let k = config.kmeans.k.unwrap_or(corpus.num_classes());
    let clusters = kmeans(&retro.vectors, k, &config.kmeans)?;
    let retrieval = retrieval_metrics(&retro.vectors, &retro.labels);
    let knn_micro_f1 = if config.knn {
        let train_idx = corpus.indices_in(Split::Train);
        if train_idx.is_empty() {
            None
        } else {
            let train = EmbeddingSet::encoded(corpus, &train_idx, model)?;
            let k = config.knn_k.min(train.len());
            Some(knn_classify(&train.vectors, &train.labels, &retro.vectors, &retro.labels, k)?.micro_f1)
        }
    } else {
        None
    };
    Ok(EvalReport {
        ami: ami(&retro.labels, &clusters.assignment)?,
        ari: ari(&retro.labels, &clusters.assignment)?,
        fms: fms(&retro.labels, &clusters.assignment)?,
        mrr: retrieval.mrr,
        precision_at_1: retrieval.precision_at_1,
        map_at_r: retrieval.map_at_r,
        delta_emb: delta_emb(&retro, &base)?,
        knn_micro_f1,
        meta: ReportMeta {
            checkpoint: checkpoint_id.to_string(),
            split,
            n: idx.len(),
            k,
            restarts: config.kmeans.restarts,
            seed: config.kmeans.seed,
        },
    })
}

/// [`evaluate`] for a checkpoint, `None` meaning the raw base embeddings.
pub fn evaluate_checkpoint(
    checkpoint: Option<&Checkpoint>,
    corpus: &Corpus,
    split: Split,
    config: &EvalConfig,
) -> Result<EvalReport> {
    match checkpoint {
        Some(c) => {
            if c.d_base != corpus.d_base() {
                return Err(Error::DimensionMismatch {
                    id: "<checkpoint>".into(),
                    expected: corpus.d_base(),
                    found: c.d_base,
                });
            }
            let model = c.model()?;
            let id = hex::encode(&c.params_digest()[..8]);
            evaluate(Some(&model), corpus, split, config, &id)
        }
        None => evaluate(None, corpus, split, config, "base"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub id: String,
    pub label: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighbourRow {
    pub query: String,
    pub label: String,
    pub neighbours: Vec<Neighbour>,
}

/// Top-`top` cosine neighbours of every query, for qualitative inspection.
pub fn neighbour_table(set: &EmbeddingSet, corpus: &Corpus, top: usize) -> Vec<NeighbourRow> {
    let tax = corpus.taxonomy();
    (0..set.len())
        .map(|q| NeighbourRow {
            query: set.ids[q].clone(),
            label: tax.name(set.labels[q]).to_string(),
            neighbours: retrieval::ranked_neighbours(&set.vectors, q)
                .into_iter()
                .take(top)
                .map(|j| Neighbour {
                    id: set.ids[j].clone(),
                    label: tax.name(set.labels[j]).to_string(),
                    cosine: cosine(&set.vectors[q], &set.vectors[j]),
                })
                .collect(),
        })
        .collect()
}

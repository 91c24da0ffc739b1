//! Mini-batch construction over the train split.
//!
//! Two regimes: `MPerClass` draws an equal number of examples from each of a
//! set of classes; `Stratified` mirrors the empirical class distribution in
//! every batch. An epoch is `ceil(|train| / N)` batches under both.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alloc::largest_remainder;
use crate::corpus::{Corpus, Split};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    MPerClass,
    Stratified,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m_per_class" | "mperclass" => Ok(Self::MPerClass),
            "stratified" => Ok(Self::Stratified),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub batch_size: usize,
    /// Examples per class under `MPerClass`.
    pub m: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::MPerClass,
            batch_size: 64,
            m: 2,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.m < 1 || self.m > self.batch_size {
            return Err(Error::Config(format!(
                "m must lie in 1..={}, got {}",
                self.batch_size, self.m
            )));
        }
        Ok(())
    }
}

/// Record indices into the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn batches_per_epoch(train_len: usize, batch_size: usize) -> usize {
    train_len.div_ceil(batch_size)
}

fn train_groups(corpus: &Corpus) -> Result<(usize, Vec<Vec<usize>>)> {
    let train = corpus.indices_in(Split::Train);
    if train.is_empty() {
        return Err(Error::Empty("train split".into()));
    }
    Ok((train.len(), corpus.by_class(&train)))
}

pub fn batches(corpus: &Corpus, config: &SamplerConfig, epoch: usize) -> Result<Vec<Batch>> {
    match config.kind {
        SamplerKind::MPerClass => m_per_class_batches(corpus, config, epoch),
        SamplerKind::Stratified => stratified_batches(corpus, config, epoch),
    }
}

/// Each batch takes `ceil(N/m)` classes, `m` examples each, truncated to `N`.
///
/// Classes are drawn from a shuffled permutation of the non-empty train
/// classes; when a batch needs more classes than exist, a fresh permutation
/// supplies the remainder. Classes smaller than `m` are sampled with
/// replacement.
pub fn m_per_class_batches(
    corpus: &Corpus,
    config: &SamplerConfig,
    epoch: usize,
) -> Result<Vec<Batch>> {
    config.validate()?;
    let (train_len, groups) = train_groups(corpus)?;
    let classes: Vec<usize> = (0..groups.len()).filter(|&c| !groups[c].is_empty()).collect();
    let n = config.batch_size;
    let m = config.m;
    let slots = n.div_ceil(m);
    let mut rng = rng::stream(config.seed, rng::DOMAIN_SAMPLER, epoch as u64);
    let mut out = Vec::new();
    for _ in 0..batches_per_epoch(train_len, n) {
        let mut chosen = Vec::with_capacity(slots);
        while chosen.len() < slots {
            let mut perm = classes.clone();
            perm.shuffle(&mut rng);
            chosen.extend(perm.into_iter().take(slots - chosen.len()));
        }
        let mut indices = Vec::with_capacity(slots * m);
        for c in chosen {
            draw_from_class(&groups[c], m, &mut rng, &mut indices);
        }
        indices.truncate(n);
        out.push(Batch { indices });
    }
    Ok(out)
}

fn draw_from_class(pool: &[usize], m: usize, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
    if pool.len() >= m {
        out.extend(index::sample(rng, pool.len(), m).into_iter().map(|i| pool[i]));
    } else {
        out.extend((0..m).map(|_| pool[rng.random_range(0..pool.len())]));
    }
}

/// Per-batch class counts are the largest-remainder allocation of `N` over
/// the empirical train class frequencies. Each class is walked through its
/// own per-epoch shuffle, reshuffling when exhausted.
pub fn stratified_batches(
    corpus: &Corpus,
    config: &SamplerConfig,
    epoch: usize,
) -> Result<Vec<Batch>> {
    config.validate()?;
    let (train_len, mut groups) = train_groups(corpus)?;
    let n = config.batch_size;
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let per_batch = largest_remainder(n, &sizes);
    let mut rng = rng::stream(config.seed, rng::DOMAIN_SAMPLER, epoch as u64);
    for g in groups.iter_mut() {
        g.shuffle(&mut rng);
    }
    let mut cursors = vec![0usize; groups.len()];
    let mut out = Vec::new();
    for _ in 0..batches_per_epoch(train_len, n) {
        let mut indices = Vec::with_capacity(n);
        for (c, &count) in per_batch.iter().enumerate() {
            for _ in 0..count {
                if cursors[c] == groups[c].len() {
                    groups[c].shuffle(&mut rng);
                    cursors[c] = 0;
                }
                indices.push(groups[c][cursors[c]]);
                cursors[c] += 1;
            }
        }
        indices.shuffle(&mut rng);
        out.push(Batch { indices });
    }
    Ok(out)
}

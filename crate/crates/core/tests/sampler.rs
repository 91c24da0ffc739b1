//! Batch composition contracts for both samplers.

#[path = "common/oracle.rs"]
mod oracle;

use std::collections::BTreeSet;

use emoretrofit::corpus::{Corpus, EmotionTaxonomy, Record, Split};
use emoretrofit::sampler::{batches, batches_per_epoch, SamplerConfig, SamplerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn train_corpus(counts: &[usize]) -> Corpus {
    let taxonomy = EmotionTaxonomy::numbered(counts.len()).unwrap();
    let mut records = Vec::new();
    for (c, &k) in counts.iter().enumerate() {
        for i in 0..k {
            records.push(Record {
                id: format!("r{c}-{i}"),
                text: None,
                label: c,
                base: vec![1.0],
                split: Some(Split::Train),
            });
        }
    }
    Corpus::new(taxonomy, 1, records).unwrap()
}

fn labels_of(corpus: &Corpus, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| corpus.record(i).label).collect()
}

#[test]
fn m_per_class_28_classes_batch_64() {
    let corpus = train_corpus(&[40; 28]);
    let cfg = SamplerConfig {
        kind: SamplerKind::MPerClass,
        batch_size: 64,
        m: 2,
        seed: 3,
    };
    let epoch = batches(&corpus, &cfg, 0).unwrap();
    assert_eq!(epoch.len(), batches_per_epoch(28 * 40, 64));
    for b in &epoch {
        let labels = labels_of(&corpus, &b.indices);
        let profile = oracle::count_profile(&labels);
        // 28 distinct classes: 4 repeated (4 each) and 24 with 2.
        assert_eq!(profile.len(), 28);
        assert_eq!(profile.iter().filter(|&&c| c == 4).count(), 4);
        assert_eq!(profile, oracle::m_per_class_profile(64, 2, 28));
    }
}

#[test]
fn m_per_class_exact_divisibility() {
    let corpus = train_corpus(&[5, 7, 3, 9]);
    let cfg = SamplerConfig {
        kind: SamplerKind::MPerClass,
        batch_size: 8,
        m: 2,
        seed: 1,
    };
    for epoch in 0..3 {
        for b in batches(&corpus, &cfg, epoch).unwrap() {
            assert_eq!(oracle::count_profile(&labels_of(&corpus, &b.indices)), vec![2; 4]);
        }
    }
}

#[test]
fn m_per_class_random_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..50 {
        let classes = rng.random_range(1..12);
        let counts: Vec<usize> = (0..classes).map(|_| rng.random_range(1..15)).collect();
        let corpus = train_corpus(&counts);
        let m = rng.random_range(1..4);
        let n = m * rng.random_range(2..12);
        let cfg = SamplerConfig {
            kind: SamplerKind::MPerClass,
            batch_size: n,
            m,
            seed: case,
        };
        for b in batches(&corpus, &cfg, 0).unwrap() {
            let labels = labels_of(&corpus, &b.indices);
            assert_eq!(oracle::count_profile(&labels), oracle::m_per_class_profile(n, m, classes), "case {case}");
        }
    }
}

#[test]
fn singleton_class_is_drawn_with_replacement() {
    let corpus = train_corpus(&[1]);
    let cfg = SamplerConfig {
        kind: SamplerKind::MPerClass,
        batch_size: 2,
        m: 2,
        seed: 0,
    };
    let b = &batches(&corpus, &cfg, 0).unwrap()[0];
    assert_eq!(b.indices, vec![0, 0]);
}

#[test]
fn m_per_class_slots_hold_distinct_records() {
    let corpus = train_corpus(&[6; 5]);
    let cfg = SamplerConfig {
        kind: SamplerKind::MPerClass,
        batch_size: 10,
        m: 2,
        seed: 4,
    };
    for b in batches(&corpus, &cfg, 0).unwrap() {
        let unique: BTreeSet<_> = b.indices.iter().collect();
        assert_eq!(unique.len(), 10);
    }
}

#[test]
fn stratified_matches_largest_remainder_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..100 {
        let classes = rng.random_range(1..=28);
        let counts: Vec<usize> = (0..classes).map(|_| rng.random_range(1..60)).collect();
        let corpus = train_corpus(&counts);
        let n = rng.random_range(2..=64);
        let cfg = SamplerConfig {
            kind: SamplerKind::Stratified,
            batch_size: n,
            m: 1,
            seed: case,
        };
        let want = oracle::largest_remainder(n, &counts);
        for b in batches(&corpus, &cfg, 0).unwrap() {
            let mut got = vec![0; classes];
            for l in labels_of(&corpus, &b.indices) {
                got[l] += 1;
            }
            assert_eq!(got, want, "case {case}");
        }
    }
}

#[test]
fn batches_draw_only_from_train() {
    let mut corpus = train_corpus(&[4, 4, 4]);
    let tags: Vec<Split> = (0..12)
        .map(|i| if i % 4 == 3 { Split::Test } else { Split::Train })
        .collect();
    corpus = corpus.with_splits(&tags);
    for kind in [SamplerKind::MPerClass, SamplerKind::Stratified] {
        let cfg = SamplerConfig {
            kind,
            batch_size: 6,
            m: 2,
            seed: 2,
        };
        for b in batches(&corpus, &cfg, 1).unwrap() {
            assert!(b.indices.iter().all(|&i| corpus.record(i).split == Some(Split::Train)));
        }
    }
}

//! Clustering indices, retrieval probes, KNN and k-means against
//! brute-force references.

#[path = "common/oracle.rs"]
mod oracle;

use emoretrofit::eval::cluster::{ami, ari, fms};
use emoretrofit::eval::kmeans::{kmeans, KMeansConfig};
use emoretrofit::eval::knn::knn_predict;
use emoretrofit::eval::retrieval::retrieval_metrics;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_partition(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

#[test]
fn partition_indices_match_pair_count_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..500 {
        let n = rng.random_range(2..=50);
        let (ka, kb) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let a = random_partition(&mut rng, n, ka);
        let b = if case % 10 == 0 {
            a.clone()
        } else {
            random_partition(&mut rng, n, kb)
        };
        for (name, got, want) in [
            ("ami", ami(&a, &b).unwrap(), oracle::ami(&a, &b)),
            ("ari", ari(&a, &b).unwrap(), oracle::ari(&a, &b)),
            ("fms", fms(&a, &b).unwrap(), oracle::fms(&a, &b)),
        ] {
            assert!((got - want).abs() < 1e-9, "case {case} {name}: {got} vs {want}");
        }
    }
}

#[test]
fn identical_partitions_score_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.random_range(2..=40);
        let k = rng.random_range(1..=6);
        let a = random_partition(&mut rng, n, k);
        // Relabel through a random injective map.
        let mut names: Vec<usize> = (100..120).collect();
        names.shuffle(&mut rng);
        let b: Vec<usize> = a.iter().map(|&x| names[x]).collect();
        assert_eq!(ami(&a, &b).unwrap(), 1.0);
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert_eq!(fms(&a, &b).unwrap(), 1.0);
    }
}

#[test]
fn relabeling_leaves_scores_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let a = random_partition(&mut rng, n, 5);
        let b = random_partition(&mut rng, n, 7);
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut rng);
        let b2: Vec<usize> = b.iter().map(|&x| perm[x] + 3).collect();
        for f in [ami, ari, fms] {
            let x = f(&a, &b).unwrap();
            let y = f(&a, &b2).unwrap();
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn retrieval_matches_exhaustive_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let n = rng.random_range(2..=30);
        let d = rng.random_range(1..=5);
        let mut vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        if case % 5 == 0 && n > 3 {
            // Exact duplicates exercise the index tie-break.
            vectors[1] = vectors[0].clone();
            vectors[3] = vectors[2].iter().map(|x| 2.0 * x).collect();
        }
        let k = rng.random_range(1..=5);
        let labels = random_partition(&mut rng, n, k);
        let got = retrieval_metrics(&vectors, &labels);
        let (mrr, p1, map) = oracle::retrieval(&vectors, &labels);
        assert!((got.mrr - mrr).abs() < 1e-12, "case {case} mrr");
        assert!((got.precision_at_1 - p1).abs() < 1e-12, "case {case} p@1");
        assert!((got.map_at_r - map).abs() < 1e-12, "case {case} map@r");
    }
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let n = rng.random_range(3..=20);
        let train: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = random_partition(&mut rng, n, 3);
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = rng.random_range(1..=n.min(7));
        assert_eq!(knn_predict(&train, &labels, &q, k), oracle::knn(&train, &labels, &q, k));
    }
}

#[test]
fn two_class_example_with_k3() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let train: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            let c = if i % 2 == 0 { 1.0 } else { -1.0 };
            vec![c + rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)]
        })
        .collect();
    let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
    for q in &train {
        assert_eq!(knn_predict(&train, &labels, q, 3), oracle::knn(&train, &labels, q, 3));
    }
}

#[test]
fn kmeans_result_is_a_lloyd_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..20 {
        let n = rng.random_range(10..60);
        let k = rng.random_range(1..6);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let cfg = KMeansConfig {
            restarts: 3,
            seed: case,
            tol: 0.0,
            ..Default::default()
        };
        let r = kmeans(&points, k, &cfg).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9), "case {case}");
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let mut inertia = 0.0;
        for (p, &c) in points.iter().zip(&r.assignment) {
            inertia += sq(p, &r.centroids[c]);
            let best = (0..k).map(|j| sq(p, &r.centroids[j])).fold(f64::INFINITY, f64::min);
            assert!(sq(p, &r.centroids[c]) <= best + 1e-9);
        }
        assert!((inertia - r.inertia).abs() < 1e-6 * inertia.max(1.0));
        for (j, centroid) in r.centroids.iter().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&r.assignment).filter(|(_, &c)| c == j).map(|(p, _)| p).collect();
            assert!(!members.is_empty(), "empty cluster");
            for dim in 0..3 {
                let mean = members.iter().map(|p| p[dim]).sum::<f64>() / members.len() as f64;
                assert!((mean - centroid[dim]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn kmeans_is_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let points: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let cfg = KMeansConfig::default();
    assert_eq!(kmeans(&points, 4, &cfg).unwrap(), kmeans(&points, 4, &cfg).unwrap());
}

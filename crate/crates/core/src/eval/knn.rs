//! Cosine k-nearest-neighbour classification probe.

use crate::linalg::cosine;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnOutcome {
    pub predictions: Vec<usize>,
    /// Equals accuracy for single-label multiclass data.
    pub micro_f1: f64,
}

/// Majority vote over the `k` nearest training points by cosine distance
/// (ties by training index). Vote ties go to the label with the smaller
/// summed distance, then the smaller label index.
pub fn knn_predict(train: &[Vec<f64>], train_labels: &[usize], query: &[f64], k: usize) -> usize {
    let mut dist: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(j, v)| (1.0 - cosine(query, v), j))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut tally: Vec<(usize, usize, f64)> = Vec::new();
    for &(d, j) in dist.iter().take(k) {
        let y = train_labels[j];
        match tally.iter_mut().find(|t| t.0 == y) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((y, 1, d)),
        }
    }
    tally
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|t| t.0)
        .expect("k >= 1 and non-empty train")
}

pub fn knn_classify(
    train: &[Vec<f64>],
    train_labels: &[usize],
    test: &[Vec<f64>],
    test_labels: &[usize],
    k: usize,
) -> Result<KnnOutcome> {
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::Empty("KNN training set".into()));
    }
    if k > train.len() {
        return Err(Error::Config(format!(
            "k={k} exceeds training size {}",
            train.len()
        )));
    }
    if train.len() != train_labels.len() || test.len() != test_labels.len() {
        return Err(Error::Shape("embedding and label counts differ".into()));
    }
    let predictions: Vec<usize> = test
        .iter()
        .map(|q| knn_predict(train, train_labels, q, k))
        .collect();
    let correct = predictions
        .iter()
        .zip(test_labels)
        .filter(|(p, y)| p == y)
        .count();
    let micro_f1 = if test.is_empty() {
        0.0
    } else {
        correct as f64 / test.len() as f64
    };
    Ok(KnnOutcome {
        predictions,
        micro_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_point_k1() {
        let train = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = knn_classify(&train, &[4, 7], &[vec![0.0, 1.0]], &[7], 1).unwrap();
        assert_eq!(out.predictions, vec![7]);
        assert_eq!(out.micro_f1, 1.0);
    }

    #[test]
    fn single_class_train() {
        let train = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        let test = vec![vec![1.0, 1.0], vec![-1.0, 0.2], vec![0.3, 0.1], vec![0.0, -1.0]];
        let out = knn_classify(&train, &[2, 2, 2], &test, &[2, 0, 2, 1], 3).unwrap();
        assert_eq!(out.predictions, vec![2; 4]);
        assert_eq!(out.micro_f1, 0.5);
    }

    #[test]
    fn vote_tie_prefers_closer_label() {
        // two votes each; label 1's neighbours are closer in sum.
        let train = vec![vec![1.0, 0.05], vec![1.0, 0.3], vec![1.0, 0.0], vec![1.0, 0.01]];
        let labels = [0, 0, 1, 1];
        assert_eq!(knn_predict(&train, &labels, &[1.0, 0.0], 4), 1);
    }

    #[test]
    fn invalid_k() {
        let train = vec![vec![1.0]];
        assert!(knn_classify(&train, &[0], &[], &[], 0).is_err());
        assert!(knn_classify(&train, &[0], &[], &[], 2).is_err());
    }
}

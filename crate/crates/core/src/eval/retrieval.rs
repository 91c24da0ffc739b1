//! Nearest-neighbour retrieval probes: MRR, P@1 and MAP@r under cosine
//! similarity, self excluded, ties broken by index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub mrr: f64,
    pub precision_at_1: f64,
    pub map_at_r: f64,
}

/// Other items ordered by decreasing cosine similarity to `query`.
pub fn ranked_neighbours(vectors: &[Vec<f64>], query: usize) -> Vec<usize> {
    let q = &vectors[query];
    let mut order: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != query)
        .map(|(j, v)| (j, cosine(q, v)))
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(j, _)| j).collect()
}

struct QueryScore {
    hit_at_1: bool,
    /// `(reciprocal rank, average precision at r)` when the query has relatives.
    ranked: Option<(f64, f64)>,
}

fn score_query(vectors: &[Vec<f64>], labels: &[usize], query: usize) -> QueryScore {
    let y = labels[query];
    let r = labels.iter().enumerate().filter(|&(j, &l)| j != query && l == y).count();
    let ranking = ranked_neighbours(vectors, query);
    let hit_at_1 = ranking.first().is_some_and(|&j| labels[j] == y);
    if r == 0 {
        return QueryScore {
            hit_at_1,
            ranked: None,
        };
    }
    let mut first = None;
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (pos, &j) in ranking.iter().enumerate() {
        if labels[j] != y {
            continue;
        }
        first.get_or_insert(pos + 1);
        if pos < r {
            hits += 1;
            ap += hits as f64 / (pos + 1) as f64;
        } else if first.is_some() {
            break;
        }
    }
    let rr = 1.0 / first.expect("r > 0 guarantees a relevant item") as f64;
    QueryScore {
        hit_at_1,
        ranked: Some((rr, ap / r as f64)),
    }
}

/// Queries without any same-label item are skipped for MRR and MAP@r and
/// count as misses for P@1.
pub fn retrieval_metrics(vectors: &[Vec<f64>], labels: &[usize]) -> RetrievalScores {
    assert_eq!(vectors.len(), labels.len());
    let n = vectors.len();
    if n < 2 {
        return RetrievalScores {
            mrr: 0.0,
            precision_at_1: 0.0,
            map_at_r: 0.0,
        };
    }
    let scores: Vec<QueryScore> = (0..n)
        .into_par_iter()
        .map(|q| score_query(vectors, labels, q))
        .collect();
    let hits = scores.iter().filter(|s| s.hit_at_1).count();
    let ranked: Vec<(f64, f64)> = scores.iter().filter_map(|s| s.ranked).collect();
    let (mrr, map) = if ranked.is_empty() {
        (0.0, 0.0)
    } else {
        let m = ranked.len() as f64;
        (
            ranked.iter().map(|r| r.0).sum::<f64>() / m,
            ranked.iter().map(|r| r.1).sum::<f64>() / m,
        )
    };
    RetrievalScores {
        mrr,
        precision_at_1: hits as f64 / n as f64,
        map_at_r: map,
    }
}

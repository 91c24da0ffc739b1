//! External clustering validity indices: AMI, ARI and Fowlkes-Mallows.

use std::collections::HashMap;

use crate::{Error, Result};

struct Contingency {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    cells: Vec<Vec<usize>>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "partitions have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let relabel = |xs: &[usize]| -> (Vec<usize>, usize) {
        let mut map = HashMap::new();
        let ids = xs
            .iter()
            .map(|x| {
                let next = map.len();
                *map.entry(*x).or_insert(next)
            })
            .collect();
        (ids, map.len())
    };
    let (ra, ka) = relabel(a);
    let (rb, kb) = relabel(b);
    let mut cells = vec![vec![0usize; kb]; ka];
    let mut rows = vec![0; ka];
    let mut cols = vec![0; kb];
    for (&i, &j) in ra.iter().zip(&rb) {
        cells[i][j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    Ok(Contingency {
        n: a.len(),
        rows,
        cols,
        cells,
    })
}

/// Same partition up to relabeling.
fn identical(t: &Contingency) -> bool {
    t.rows.len() == t.cols.len()
        && t.cells
            .iter()
            .all(|row| row.iter().filter(|&&c| c > 0).count() == 1)
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_information(t: &Contingency) -> f64 {
    let n = t.n as f64;
    let mut mi = 0.0;
    for (i, row) in t.cells.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (t.rows[i] as f64 * t.cols[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Expected mutual information under the hypergeometric (permutation) model.
fn expected_mutual_information(t: &Contingency) -> f64 {
    let n = t.n;
    let mut ln_fact = vec![0.0; n + 1];
    for k in 1..=n {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &a in &t.rows {
        for &b in &t.cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = ln_fact[a] + ln_fact[b] + ln_fact[n - a] + ln_fact[n - b] - ln_fact[n];
            for nij in lo..=hi {
                let log_p = fixed
                    - ln_fact[nij]
                    - ln_fact[a - nij]
                    - ln_fact[b - nij]
                    - ln_fact[n + nij - a - b];
                let x = nij as f64;
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information, arithmetic-mean normalisation, natural log.
pub fn ami(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.n < 2 {
        return Err(Error::Shape("AMI needs at least two items".into()));
    }
    if identical(&t) {
        return Ok(1.0);
    }
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let mean_h = 0.5 * (entropy(&t.rows, t.n) + entropy(&t.cols, t.n));
    let denom = mean_h - emi;
    if denom.abs() < f64::EPSILON {
        return Ok(0.0);
    }
    Ok((mi - emi) / denom)
}

/// Adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if identical(&t) {
        return Ok(1.0);
    }
    let index: f64 = t.cells.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_a: f64 = t.rows.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = t.cols.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(t.n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(0.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Fowlkes-Mallows score `TP / sqrt((TP+FP)(TP+FN))`, with `b` the
/// predicted partition. Zero when either side has no co-clustered pair.
pub fn fms(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if identical(&t) {
        return Ok(1.0);
    }
    let tp: f64 = t.cells.iter().flatten().map(|&c| comb2(c)).sum();
    let same_a: f64 = t.rows.iter().map(|&c| comb2(c)).sum();
    let same_b: f64 = t.cols.iter().map(|&c| comb2(c)).sum();
    if same_a == 0.0 || same_b == 0.0 {
        return Ok(0.0);
    }
    Ok(tp / (same_a * same_b).sqrt())
}

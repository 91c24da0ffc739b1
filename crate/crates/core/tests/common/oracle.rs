//! Brute-force reference implementations used as test oracles.
//!
//! Everything here is written the slow, literal way and depends only on std,
//! so it can be shared by several test targets.

#![allow(dead_code)]

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Supervised contrastive loss by direct triple loop, no log-sum-exp tricks.
/// `memory` entries are candidates only.
pub fn scl(anchors: &[Vec<f64>], labels: &[usize], memory: &[(Vec<f64>, usize)], tau: f64) -> f64 {
    let cands: Vec<(&[f64], usize)> = anchors
        .iter()
        .map(|v| v.as_slice())
        .zip(labels.iter().copied())
        .chain(memory.iter().map(|(v, l)| (v.as_slice(), *l)))
        .collect();
    let mut total = 0.0;
    for i in 0..anchors.len() {
        let mut denom = 0.0;
        for (b, (v, _)) in cands.iter().enumerate() {
            if b != i {
                denom += (dot(&anchors[i], v) / tau).exp();
            }
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (p, (v, l)) in cands.iter().enumerate() {
            if p != i && *l == labels[i] {
                sum += ((dot(&anchors[i], v) / tau).exp() / denom).ln();
                count += 1;
            }
        }
        if count > 0 {
            total += -sum / count as f64;
        }
    }
    total
}

/// Sum of unsquared L2 distances.
pub fn vsp(enc: &[Vec<f64>], fixed: &[Vec<f64>]) -> f64 {
    enc.iter()
        .zip(fixed)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .sum()
}

/// Exact binomial coefficient in integer arithmetic.
pub fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn pairs(x: usize) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Pair-agreement counts over all `n(n-1)/2` item pairs:
/// `(both same, same in a only, same in b only, both different)`.
pub fn pair_counts(a: &[usize], b: &[usize]) -> (f64, f64, f64, f64) {
    let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    (ss, sd, ds, dd)
}

/// Same partition up to relabeling: every pair agrees.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let (_, sd, ds, _) = pair_counts(a, b);
    sd == 0.0 && ds == 0.0
}

pub fn ari(a: &[usize], b: &[usize]) -> f64 {
    if same_partition(a, b) {
        return 1.0;
    }
    let (ss, sd, ds, dd) = pair_counts(a, b);
    let total = ss + sd + ds + dd;
    let same_a = ss + sd;
    let same_b = ss + ds;
    let expected = same_a * same_b / total;
    let max = 0.5 * (same_a + same_b);
    if max == expected {
        0.0
    } else {
        (ss - expected) / (max - expected)
    }
}

pub fn fms(a: &[usize], b: &[usize]) -> f64 {
    if same_partition(a, b) {
        return 1.0;
    }
    let (ss, sd, ds, _) = pair_counts(a, b);
    if ss + sd == 0.0 || ss + ds == 0.0 {
        0.0
    } else {
        ss / ((ss + sd) * (ss + ds)).sqrt()
    }
}

fn counts(xs: &[usize]) -> Vec<usize> {
    let k = xs.iter().max().map_or(0, |m| m + 1);
    let mut c = vec![0; k];
    for &x in xs {
        c[x] += 1;
    }
    c.into_iter().filter(|&c| c > 0).collect()
}

fn entropy(c: &[usize], n: f64) -> f64 {
    c.iter()
        .map(|&x| x as f64 / n)
        .map(|p| -p * p.ln())
        .sum()
}

/// AMI with arithmetic-mean normalisation. The expected mutual information
/// sums over the hypergeometric law with probabilities taken from exact
/// integer binomials.
pub fn ami(a: &[usize], b: &[usize]) -> f64 {
    if same_partition(a, b) {
        return 1.0;
    }
    let n = a.len();
    let nf = n as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let x = table[i][j];
            if x > 0 {
                let x = x as f64;
                mi += x / nf * (nf * x / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    let mut emi = 0.0;
    for &ai in rows.iter().filter(|&&r| r > 0) {
        for &bj in cols.iter().filter(|&&c| c > 0) {
            let denom = binom(n, ai) as f64;
            for x in 1..=ai.min(bj) {
                if ai - x > n - bj {
                    continue;
                }
                let p = (binom(bj, x) as f64) * (binom(n - bj, ai - x) as f64) / denom;
                let xf = x as f64;
                emi += p * xf / nf * (nf * xf / (ai as f64 * bj as f64)).ln();
            }
        }
    }
    let mean_h = 0.5 * (entropy(&counts(a), nf) + entropy(&counts(b), nf));
    let d = mean_h - emi;
    if d.abs() < f64::EPSILON {
        0.0
    } else {
        (mi - emi) / d
    }
}

/// Retrieval metrics by exhaustive rank counting: the rank of item `j` for
/// query `q` is one plus the number of other items strictly ahead of it
/// (higher cosine, or equal cosine and smaller index).
pub fn retrieval(vectors: &[Vec<f64>], labels: &[usize]) -> (f64, f64, f64) {
    let n = vectors.len();
    let (mut mrr, mut p1, mut map) = (0.0, 0.0, 0.0);
    let mut with_relatives = 0usize;
    for q in 0..n {
        let sim: Vec<f64> = vectors.iter().map(|v| cosine(&vectors[q], v)).collect();
        let rank = |j: usize| {
            1 + (0..n)
                .filter(|&t| t != q && t != j)
                .filter(|&t| sim[t] > sim[j] || (sim[t] == sim[j] && t < j))
                .count()
        };
        let relevant: Vec<usize> = (0..n).filter(|&j| j != q && labels[j] == labels[q]).collect();
        let top = (0..n).filter(|&j| j != q).find(|&j| rank(j) == 1);
        if top.is_some_and(|j| labels[j] == labels[q]) {
            p1 += 1.0;
        }
        let r = relevant.len();
        if r == 0 {
            continue;
        }
        with_relatives += 1;
        let ranks: Vec<usize> = relevant.iter().map(|&j| rank(j)).collect();
        mrr += 1.0 / *ranks.iter().min().unwrap() as f64;
        let mut ap = 0.0;
        for &rk in ranks.iter().filter(|&&rk| rk <= r) {
            let above = ranks.iter().filter(|&&o| o <= rk).count();
            ap += above as f64 / rk as f64;
        }
        map += ap / r as f64;
    }
    let m = with_relatives.max(1) as f64;
    (mrr / m, p1 / n as f64, map / m)
}

/// KNN by full distance scan and explicit vote counting with the documented
/// tie rules.
pub fn knn(train: &[Vec<f64>], labels: &[usize], query: &[f64], k: usize) -> usize {
    let n = train.len();
    let dist: Vec<f64> = train.iter().map(|v| 1.0 - cosine(query, v)).collect();
    let mut taken = vec![false; n];
    let mut nearest = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for j in 0..n {
            if taken[j] {
                continue;
            }
            if best.is_none_or(|b| dist[j] < dist[b]) {
                best = Some(j);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        nearest.push(b);
    }
    let max_label = labels.iter().max().unwrap() + 1;
    let mut votes = vec![0usize; max_label];
    let mut dsum = vec![0.0; max_label];
    for &j in &nearest {
        votes[labels[j]] += 1;
        dsum[labels[j]] += dist[j];
    }
    let mut winner = None;
    for y in 0..max_label {
        if votes[y] == 0 {
            continue;
        }
        winner = match winner {
            None => Some(y),
            Some(w) if votes[y] > votes[w] || (votes[y] == votes[w] && dsum[y] < dsum[w]) => Some(y),
            keep => keep,
        };
    }
    winner.unwrap()
}

/// Hamilton apportionment via exact rational comparison: floors of
/// `total·w/W`, then one extra unit to the largest remainders, lower index
/// first on ties.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let w: u128 = weights.iter().map(|&x| x as u128).sum();
    if w == 0 {
        return vec![0; weights.len()];
    }
    let t = total as u128;
    let mut out: Vec<usize> = weights.iter().map(|&x| (t * x as u128 / w) as usize).collect();
    let left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = t * weights[i] as u128 % w;
        let rj = t * weights[j] as u128 % w;
        rj.cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().take(left) {
        out[i] += 1;
    }
    out
}

/// Per-class counts one MPerClass batch must show when `m` divides `n`:
/// `ceil(n/m)` class slots of `m` each, spread over `classes` distinct
/// classes as evenly as whole passes allow. Returned sorted descending.
pub fn m_per_class_profile(n: usize, m: usize, classes: usize) -> Vec<usize> {
    assert_eq!(n % m, 0);
    let slots = n / m;
    let full = slots / classes;
    let extra = slots % classes;
    let mut out: Vec<usize> = (0..classes)
        .map(|c| m * (full + usize::from(c < extra)))
        .filter(|&x| x > 0)
        .collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

/// Per-class counts of a batch, sorted descending, zeros dropped.
pub fn count_profile(labels: &[usize]) -> Vec<usize> {
    let mut c = std::collections::BTreeMap::new();
    for &l in labels {
        *c.entry(l).or_insert(0usize) += 1;
    }
    let mut out: Vec<usize> = c.into_values().collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

//! Supervised contrastive loss over a batch widened by a cross-batch memory,
//! the vector-space-preservation penalty, and their combination.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, norm};
use crate::{Error, Result};

const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature: f64,
    /// Weight of the vector-space-preservation term.
    pub lambda: f64,
    /// Cross-batch memory capacity; 0 disables the memory.
    pub memory: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            lambda: 0.05,
            memory: 512,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// FIFO bank of detached projected embeddings and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct XbmMemory {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, usize)>,
}

impl XbmMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.entries.iter().map(|(z, y)| (z.as_slice(), *y))
    }

    /// Enqueue in batch order, evicting the oldest beyond capacity.
    pub fn update(&mut self, z: &[Vec<f64>], labels: &[usize]) {
        if self.capacity == 0 {
            return;
        }
        for (v, &y) in z.iter().zip(labels) {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back((v.clone(), y));
        }
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Anchors (the current batch) plus memory candidates.
///
/// The candidate set for anchor `i` is every anchor except `i` followed by
/// every memory entry. Gradients exist only for anchors.
#[derive(Debug, Clone)]
pub struct ContrastBank<'a> {
    anchors: &'a [Vec<f64>],
    labels: &'a [usize],
    memory: Vec<(&'a [f64], usize)>,
}

impl<'a> ContrastBank<'a> {
    pub fn new(
        anchors: &'a [Vec<f64>],
        labels: &'a [usize],
        memory: Option<&'a XbmMemory>,
    ) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Empty("anchor block".into()));
        }
        if anchors.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} anchors but {} labels",
                anchors.len(),
                labels.len()
            )));
        }
        let memory: Vec<_> = memory.map(|m| m.iter().collect()).unwrap_or_default();
        let dim = anchors[0].len();
        let vectors = anchors.iter().map(|v| v.as_slice()).chain(memory.iter().map(|m| m.0));
        for (index, v) in vectors.enumerate() {
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "bank vector {index} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            let n = norm(v);
            if (n - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::NotUnitNorm { index, norm: n });
            }
        }
        Ok(Self {
            anchors,
            labels,
            memory,
        })
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.anchors.len() + self.memory.len()
    }

    fn candidate(&self, j: usize) -> (&[f64], usize) {
        let n = self.anchors.len();
        if j < n {
            (&self.anchors[j], self.labels[j])
        } else {
            self.memory[j - n]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    /// Gradient with respect to each input row.
    pub grad: Vec<Vec<f64>>,
}

/// Supervised contrastive loss, summed over anchors.
///
/// ```text
/// L = Σ_i -1/|P(i)| Σ_{p∈P(i)} log( exp(z_i·z_p/τ) / Σ_{b∈B(i)} exp(z_i·z_b/τ) )
/// ```
///
/// `B(i)` is every candidate but `i`; `P(i)` the same-label subset. Anchors
/// with an empty `P(i)` contribute nothing.
pub fn scl_loss(bank: &ContrastBank<'_>, temperature: f64) -> Result<LossGrad> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let n = bank.num_anchors();
    let total = bank.num_candidates();
    let dim = bank.anchors[0].len();
    let inv_t = 1.0 / temperature;
    let mut value = 0.0;
    let mut grad = vec![vec![0.0; dim]; n];
    let mut logits = vec![0.0; total];
    let mut coeff = vec![0.0; total];
    for i in 0..n {
        let zi = &bank.anchors[i];
        let yi = bank.labels[i];
        let mut positives = 0usize;
        let mut max = f64::NEG_INFINITY;
        for (j, logit) in logits.iter_mut().enumerate() {
            if j == i {
                continue;
            }
            let (zj, yj) = bank.candidate(j);
            *logit = dot(zi, zj) * inv_t;
            max = max.max(*logit);
            positives += usize::from(yj == yi);
        }
        if positives == 0 {
            continue;
        }
        let mut denom = 0.0;
        for (j, &l) in logits.iter().enumerate() {
            if j != i {
                denom += (l - max).exp();
            }
        }
        let lse = max + denom.ln();
        let inv_p = 1.0 / positives as f64;
        let mut anchor_loss = 0.0;
        for j in 0..total {
            if j == i {
                coeff[j] = 0.0;
                continue;
            }
            let (_, yj) = bank.candidate(j);
            let softmax = (logits[j] - lse).exp();
            let positive = yj == yi;
            if positive {
                anchor_loss += lse - logits[j];
            }
            // d loss_i / d logit_ij
            coeff[j] = softmax - if positive { inv_p } else { 0.0 };
        }
        value += anchor_loss * inv_p;
        for j in 0..total {
            if j == i || coeff[j] == 0.0 {
                continue;
            }
            let c = coeff[j] * inv_t;
            let (zj, _) = bank.candidate(j);
            axpy(c, zj, &mut grad[i]);
            if j < n {
                axpy(c, zi, &mut grad[j]);
            }
        }
    }
    Ok(LossGrad { value, grad })
}

/// Vector-space preservation: `Σ_i ‖enc_i − fixed_i‖₂` (unsquared).
///
/// Each term's gradient is the unit difference vector; terms with norm
/// below 1e-12 get a zero subgradient.
pub fn vsp_loss(enc_out: &[Vec<f64>], fixed_out: &[Vec<f64>]) -> Result<LossGrad> {
    if enc_out.len() != fixed_out.len() {
        return Err(Error::Shape(format!(
            "{} encoded rows but {} fixed rows",
            enc_out.len(),
            fixed_out.len()
        )));
    }
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(enc_out.len());
    for (e, f) in enc_out.iter().zip(fixed_out) {
        if e.len() != f.len() {
            return Err(Error::Shape(format!(
                "row dimensions {} and {} differ",
                e.len(),
                f.len()
            )));
        }
        let diff: Vec<f64> = e.iter().zip(f).map(|(a, b)| a - b).collect();
        let d = norm(&diff);
        value += d;
        if d < 1e-12 {
            grad.push(vec![0.0; diff.len()]);
        } else {
            grad.push(diff.into_iter().map(|x| x / d).collect());
        }
    }
    Ok(LossGrad { value, grad })
}

pub fn total_loss(scl: f64, vsp: f64, lambda: f64) -> f64 {
    scl + lambda * vsp
}

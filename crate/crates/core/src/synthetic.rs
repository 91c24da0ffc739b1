//! Gaussian-mixture corpora for running the engine without external data.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Corpus, EmotionTaxonomy, Record};
use crate::rng;
use crate::{Error, Result};

/// Mixture parameters. The defaults give 28 classes in 32 dimensions whose
/// structure lives in a 26-dimensional subspace, with six label-independent
/// high-variance directions on top. Those dominate Euclidean and cosine
/// geometry the way a few rogue coordinates dominate pre-trained sentence
/// embeddings, so raw k-means finds little class structure while nearest
/// neighbours still carry some label signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Standard deviation of class centres around the shared mean.
    pub between: f64,
    /// Standard deviation of points around their class centre, inside the
    /// class-informative subspace.
    pub within: f64,
    /// Dimension of the subspace that carries class structure. `None` puts
    /// it in every coordinate (a plain isotropic mixture).
    pub signal_dims: Option<usize>,
    /// Standard deviation of label-independent variation in the remaining
    /// coordinates.
    pub nuisance: f64,
    /// Norm of a mean vector shared by every point. Pre-trained sentence
    /// encoders are strongly anisotropic; this reproduces that.
    pub offset: f64,
    pub seed: u64,
    /// Split fractions; `None` leaves records untagged.
    pub split: Option<(f64, f64, f64)>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 28,
            dim: 32,
            per_class: 40,
            between: 0.5,
            within: 0.25,
            signal_dims: Some(26),
            nuisance: 1.75,
            offset: 0.0,
            seed: 0,
            split: Some((0.8, 0.1, 0.1)),
        }
    }
}

fn gaussian(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            scale * x
        })
        .collect::<Vec<f64>>()
}

/// Rows of a uniformly random orthogonal matrix (Gram-Schmidt on a
/// Gaussian matrix). The identity when `dim` is 1.
fn random_rotation(rng: &mut impl Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v = gaussian(rng, dim, 1.0);
        for r in &rows {
            let p = crate::linalg::dot(r, &v);
            crate::linalg::axpy(-p, r, &mut v);
        }
        let n = crate::linalg::norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            rows.push(v);
        }
    }
    rows
}

pub fn generate(spec: &SyntheticSpec) -> Result<Corpus> {
    if spec.classes == 0 || spec.dim == 0 || spec.per_class == 0 {
        return Err(Error::Config(
            "synthetic corpus needs positive classes, dim and per_class".into(),
        ));
    }
    if !(spec.between >= 0.0 && spec.within >= 0.0 && spec.nuisance >= 0.0 && spec.offset >= 0.0)
    {
        return Err(Error::Config("spreads must be non-negative".into()));
    }
    let signal = spec.signal_dims.unwrap_or(spec.dim);
    if signal == 0 || signal > spec.dim {
        return Err(Error::Config(format!(
            "signal_dims must be in 1..={}, got {signal}",
            spec.dim
        )));
    }
    let taxonomy = if spec.classes == corpus::GO_EMOTIONS.len() {
        EmotionTaxonomy::go_emotions()
    } else {
        EmotionTaxonomy::numbered(spec.classes)?
    };
    let mut rng = rng::stream(spec.seed, rng::DOMAIN_SYNTHETIC, 0);
    let mut shared = gaussian(&mut rng, spec.dim, 1.0);
    let n = crate::linalg::norm(&shared).max(f64::MIN_POSITIVE);
    shared.iter_mut().for_each(|v| *v *= spec.offset / n);
    let basis = random_rotation(&mut rng, spec.dim);
    let centres: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| gaussian(&mut rng, signal, spec.between))
        .collect();
    let mut records = Vec::with_capacity(spec.classes * spec.per_class);
    for i in 0..spec.per_class {
        for (c, centre) in centres.iter().enumerate() {
            let within = gaussian(&mut rng, signal, spec.within);
            let nuisance = gaussian(&mut rng, spec.dim - signal, spec.nuisance);
            // Coordinates in the latent frame, then rotated into the ambient one.
            let latent: Vec<f64> = (0..signal)
                .map(|k| centre[k] + within[k])
                .chain(nuisance)
                .collect();
            let base = (0..spec.dim)
                .map(|k| shared[k] + crate::linalg::dot(&basis[k], &latent))
                .collect();
            records.push(Record {
                id: format!("syn-{c}-{i}"),
                text: None,
                label: c,
                base,
                split: None,
            });
        }
    }
    let corpus = Corpus::new(taxonomy, spec.dim, records)?;
    let corpus = match spec.split {
        Some(f) => corpus::split(&corpus, f, spec.seed)?.0,
        None => corpus,
    };
    let meta = serde_json::json!({ "generator": spec });
    Ok(corpus.with_meta(meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    #[test]
    fn shape_and_determinism() {
        let spec = SyntheticSpec {
            classes: 5,
            dim: 3,
            per_class: 10,
            signal_dims: None,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert_eq!(a.d_base(), 3);
        let test = a.indices_in(Split::Test);
        assert_eq!(a.class_counts(&test), vec![1; 5]);
    }

    #[test]
    fn zero_spread_collapses_to_centres() {
        let spec = SyntheticSpec {
            classes: 2,
            dim: 2,
            per_class: 3,
            within: 0.0,
            signal_dims: None,
            split: None,
            ..Default::default()
        };
        let c = generate(&spec).unwrap();
        let same: Vec<_> = c.records().iter().filter(|r| r.label == 0).collect();
        assert!(same.windows(2).all(|w| w[0].base == w[1].base));
    }

    #[test]
    fn rotation_is_orthonormal() {
        let mut rng = rng::stream(3, rng::DOMAIN_SYNTHETIC, 0);
        let q = random_rotation(&mut rng, 6);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((crate::linalg::dot(&q[i], &q[j]) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_signal_dims_rejected() {
        for s in [0, 4] {
            let spec = SyntheticSpec {
                dim: 3,
                signal_dims: Some(s),
                ..Default::default()
            };
            assert!(matches!(generate(&spec), Err(Error::Config(_))));
        }
    }
}

//! The retrofit encoder, its projection heads, and exact reverse-mode
//! gradients through both.
//!
//! The encoder is residual over the frozen base embedding:
//!
//! ```text
//! u = x + W2 · dropout(relu(W1 · x + b1)) + b2
//! ```
//!
//! With `W2` and `b2` zero the encoder is the identity, which is exactly the
//! frozen reference encoder; training starts there. A projection head maps
//! `u` to a unit vector `z` on which the contrastive loss is computed.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::linalg::{norm, Matrix};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Identity,
    Linear,
    Mlp,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "i" => Ok(Self::Identity),
            "linear" => Ok(Self::Linear),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::Config(format!("unknown head kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for HeadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadKind::Identity => "identity",
            HeadKind::Linear => "linear",
            HeadKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder hidden width; `None` means `d_base`.
    pub hidden: Option<usize>,
    pub dropout: f64,
    pub head: HeadKind,
    /// Output dimension of the Linear and MLP heads.
    pub proj_dim: usize,
    /// MLP head hidden width, clamped to `4 * d_base`.
    pub mlp_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            dropout: 0.1,
            head: HeadKind::Mlp,
            proj_dim: 64,
            mlp_hidden: 768,
        }
    }
}

impl ModelConfig {
    pub fn hidden_for(&self, d_base: usize) -> usize {
        self.hidden.unwrap_or(d_base)
    }

    pub fn mlp_hidden_for(&self, d_base: usize) -> usize {
        self.mlp_hidden.min(4 * d_base)
    }

    pub fn validate(&self, d_base: usize) -> Result<()> {
        if d_base == 0 || self.hidden_for(d_base) == 0 || self.proj_dim == 0 || self.mlp_hidden == 0
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrofitEncoder {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionHead {
    Identity,
    Linear {
        a: Matrix,
        c: Vec<f64>,
    },
    Mlp {
        a1: Matrix,
        c1: Vec<f64>,
        a2: Matrix,
        c2: Vec<f64>,
        dropout: f64,
    },
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (cols as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Matrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

fn uniform_vec(len: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..len).map(|_| dist.sample(rng)).collect()
}

/// Seeded initialisation with a zero residual branch, so `Enc(x) = x`.
pub fn init_params(
    config: &ModelConfig,
    d_base: usize,
    seed: u64,
) -> Result<(RetrofitEncoder, ProjectionHead)> {
    config.validate(d_base)?;
    let mut rng = rng::stream(seed, rng::DOMAIN_INIT, 0);
    let h = config.hidden_for(d_base);
    let encoder = RetrofitEncoder {
        w1: uniform_matrix(h, d_base, &mut rng),
        b1: uniform_vec(h, d_base, &mut rng),
        w2: Matrix::zeros(d_base, h),
        b2: vec![0.0; d_base],
        dropout: config.dropout,
    };
    let d = config.proj_dim;
    let head = match config.head {
        HeadKind::Identity => ProjectionHead::Identity,
        HeadKind::Linear => ProjectionHead::Linear {
            a: uniform_matrix(d, d_base, &mut rng),
            c: uniform_vec(d, d_base, &mut rng),
        },
        HeadKind::Mlp => {
            let hm = config.mlp_hidden_for(d_base);
            ProjectionHead::Mlp {
                a1: uniform_matrix(hm, d_base, &mut rng),
                c1: uniform_vec(hm, d_base, &mut rng),
                a2: uniform_matrix(d, hm, &mut rng),
                c2: uniform_vec(d, hm, &mut rng),
                dropout: config.dropout,
            }
        }
    };
    Ok((encoder, head))
}

/// Inverted-dropout scale factors: `0` or `1/(1-p)` per unit.
fn dropout_mask(len: usize, p: f64, rng: Option<&mut impl Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

fn relu_masked(pre: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        Some(m) => pre.iter().zip(m).map(|(&p, &s)| p.max(0.0) * s).collect(),
        None => pre.iter().map(|&p| p.max(0.0)).collect(),
    }
}

/// Backprop through `relu` then the dropout mask.
fn relu_masked_grad(pre: &[f64], mask: Option<&[f64]>, g: &[f64]) -> Vec<f64> {
    pre.iter()
        .enumerate()
        .map(|(i, &p)| {
            if p > 0.0 {
                g[i] * mask.map_or(1.0, |m| m[i])
            } else {
                0.0
            }
        })
        .collect()
}

impl RetrofitEncoder {
    pub fn d_base(&self) -> usize {
        self.w1.cols
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows
    }

    fn check_dim(&self, base: &[f64]) -> Result<()> {
        if base.len() != self.d_base() {
            return Err(Error::Shape(format!(
                "encoder expects dimension {}, got {}",
                self.d_base(),
                base.len()
            )));
        }
        Ok(())
    }

    /// Eval-mode encoding (no dropout). Pure.
    pub fn encode(&self, base: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(base)?;
        Ok(self.forward(base, None::<&mut rand_chacha::ChaCha8Rng>).out)
    }

    /// Train-mode encoding with dropout drawn from `rng`.
    pub fn encode_train(&self, base: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
        self.check_dim(base)?;
        Ok(self.forward(base, Some(rng)).out)
    }

    fn forward(&self, x: &[f64], rng: Option<&mut impl Rng>) -> EncoderTrace {
        let pre = self.w1.affine(x, &self.b1);
        let mask = dropout_mask(pre.len(), self.dropout, rng);
        let hidden = relu_masked(&pre, mask.as_deref());
        let mut out = self.w2.affine(&hidden, &self.b2);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
        EncoderTrace {
            pre,
            mask,
            hidden,
            out,
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows, self.w1.cols),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows, self.w2.cols),
            b2: vec![0.0; self.b2.len()],
            dropout: self.dropout,
        }
    }
}

impl ProjectionHead {
    pub fn kind(&self) -> HeadKind {
        match self {
            ProjectionHead::Identity => HeadKind::Identity,
            ProjectionHead::Linear { .. } => HeadKind::Linear,
            ProjectionHead::Mlp { .. } => HeadKind::Mlp,
        }
    }

    /// Eval-mode projection onto the unit sphere.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape("projection input is not finite".into()));
        }
        let input_dim = match self {
            ProjectionHead::Identity => v.len(),
            ProjectionHead::Linear { a, .. } => a.cols,
            ProjectionHead::Mlp { a1, .. } => a1.cols,
        };
        if v.len() != input_dim {
            return Err(Error::Shape(format!(
                "head expects dimension {input_dim}, got {}",
                v.len()
            )));
        }
        Ok(self
            .forward(v, None::<&mut rand_chacha::ChaCha8Rng>)?
            .z)
    }

    fn forward(&self, u: &[f64], rng: Option<&mut impl Rng>) -> Result<HeadTrace> {
        let (pre, mask, hidden, v) = match self {
            ProjectionHead::Identity => (Vec::new(), None, Vec::new(), u.to_vec()),
            ProjectionHead::Linear { a, c } => (Vec::new(), None, Vec::new(), a.affine(u, c)),
            ProjectionHead::Mlp {
                a1,
                c1,
                a2,
                c2,
                dropout,
            } => {
                let pre = a1.affine(u, c1);
                let mask = dropout_mask(pre.len(), *dropout, rng);
                let hidden = relu_masked(&pre, mask.as_deref());
                let v = a2.affine(&hidden, c2);
                (pre, mask, hidden, v)
            }
        };
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm("projection"));
        }
        let z = v.iter().map(|x| x / n).collect();
        Ok(HeadTrace {
            pre,
            mask,
            hidden,
            norm: n,
            z,
        })
    }

    fn zeros_like(&self) -> Self {
        match self {
            ProjectionHead::Identity => ProjectionHead::Identity,
            ProjectionHead::Linear { a, c } => ProjectionHead::Linear {
                a: Matrix::zeros(a.rows, a.cols),
                c: vec![0.0; c.len()],
            },
            ProjectionHead::Mlp {
                a1,
                c1,
                a2,
                c2,
                dropout,
            } => ProjectionHead::Mlp {
                a1: Matrix::zeros(a1.rows, a1.cols),
                c1: vec![0.0; c1.len()],
                a2: Matrix::zeros(a2.rows, a2.cols),
                c2: vec![0.0; c2.len()],
                dropout: *dropout,
            },
        }
    }
}

#[derive(Debug, Clone)]
struct EncoderTrace {
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

#[derive(Debug, Clone)]
struct HeadTrace {
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
    hidden: Vec<f64>,
    norm: f64,
    z: Vec<f64>,
}

/// Intermediates recorded by [`RetrofitModel::forward`] for one batch.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    inputs: Vec<Vec<f64>>,
    enc: Vec<EncoderTrace>,
    head: Vec<HeadTrace>,
}

impl ForwardPass {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Retrofitted embeddings `Enc(x_i)`.
    pub fn encoded(&self) -> Vec<Vec<f64>> {
        self.enc.iter().map(|t| t.out.clone()).collect()
    }

    /// Unit projections `z_i`.
    pub fn projected(&self) -> Vec<Vec<f64>> {
        self.head.iter().map(|t| t.z.clone()).collect()
    }
}

/// Number of encoder tensors (W1, b1, W2, b2) leading the tensor list.
pub const ENCODER_TENSORS: usize = 4;

/// Encoder plus projection head. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrofitModel {
    pub encoder: RetrofitEncoder,
    pub head: ProjectionHead,
}

impl RetrofitModel {
    pub fn new(config: &ModelConfig, d_base: usize, seed: u64) -> Result<Self> {
        let (encoder, head) = init_params(config, d_base, seed)?;
        Ok(Self { encoder, head })
    }

    pub fn d_base(&self) -> usize {
        self.encoder.d_base()
    }

    /// Forward pass over a batch. `rng` enables train-mode dropout.
    pub fn forward<R: Rng>(&self, inputs: &[&[f64]], mut rng: Option<&mut R>) -> Result<ForwardPass> {
        let mut enc = Vec::with_capacity(inputs.len());
        let mut head = Vec::with_capacity(inputs.len());
        for x in inputs {
            self.encoder.check_dim(x)?;
            let e = self.encoder.forward(x, rng.as_deref_mut());
            let h = self.head.forward(&e.out, rng.as_deref_mut())?;
            enc.push(e);
            head.push(h);
        }
        Ok(ForwardPass {
            inputs: inputs.iter().map(|x| x.to_vec()).collect(),
            enc,
            head,
        })
    }

    /// Parameter gradients given upstream gradients with respect to each
    /// `z_i` and extra upstream gradients with respect to each `Enc(x_i)`.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        dz: &[Vec<f64>],
        du_extra: &[Vec<f64>],
    ) -> Result<RetrofitModel> {
        if dz.len() != pass.len() || du_extra.len() != pass.len() {
            return Err(Error::Shape(format!(
                "backward got {} / {} upstream gradients for a batch of {}",
                dz.len(),
                du_extra.len(),
                pass.len()
            )));
        }
        let mut grad = RetrofitModel {
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
        };
        for i in 0..pass.len() {
            let et = &pass.enc[i];
            let ht = &pass.head[i];
            let u = &et.out;

            // Through the l2 normalisation: dv = (dz - z (z . dz)) / |v|.
            let z = &ht.z;
            let zdz = crate::linalg::dot(z, &dz[i]);
            let dv: Vec<f64> = z
                .iter()
                .zip(&dz[i])
                .map(|(zk, gk)| (gk - zk * zdz) / ht.norm)
                .collect();

            let mut du = du_extra[i].clone();
            match (&self.head, &mut grad.head) {
                (ProjectionHead::Identity, _) => {
                    crate::linalg::axpy(1.0, &dv, &mut du);
                }
                (ProjectionHead::Linear { a, .. }, ProjectionHead::Linear { a: ga, c: gc }) => {
                    ga.accumulate_outer(&dv, u);
                    crate::linalg::axpy(1.0, &dv, gc);
                    a.accumulate_transposed(&dv, &mut du);
                }
                (
                    ProjectionHead::Mlp { a1, a2, .. },
                    ProjectionHead::Mlp {
                        a1: ga1,
                        c1: gc1,
                        a2: ga2,
                        c2: gc2,
                        ..
                    },
                ) => {
                    ga2.accumulate_outer(&dv, &ht.hidden);
                    crate::linalg::axpy(1.0, &dv, gc2);
                    let mut dh = vec![0.0; a2.cols];
                    a2.accumulate_transposed(&dv, &mut dh);
                    let dpre = relu_masked_grad(&ht.pre, ht.mask.as_deref(), &dh);
                    ga1.accumulate_outer(&dpre, u);
                    crate::linalg::axpy(1.0, &dpre, gc1);
                    a1.accumulate_transposed(&dpre, &mut du);
                }
                _ => unreachable!("gradient container mirrors the model"),
            }

            let ge = &mut grad.encoder;
            ge.w2.accumulate_outer(&du, &et.hidden);
            crate::linalg::axpy(1.0, &du, &mut ge.b2);
            let mut dh = vec![0.0; self.encoder.hidden()];
            self.encoder.w2.accumulate_transposed(&du, &mut dh);
            let dpre = relu_masked_grad(&et.pre, et.mask.as_deref(), &dh);
            ge.w1.accumulate_outer(&dpre, &pass.inputs[i]);
            crate::linalg::axpy(1.0, &dpre, &mut ge.b1);
        }
        Ok(grad)
    }

    /// Named parameter tensors in a fixed order: the encoder's
    /// [`ENCODER_TENSORS`] tensors first, then the head's.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let e = &self.encoder;
        let mut out: Vec<(&'static str, Vec<usize>, &[f64])> = vec![
            ("encoder.w1", vec![e.w1.rows, e.w1.cols], &e.w1.data),
            ("encoder.b1", vec![e.b1.len()], &e.b1),
            ("encoder.w2", vec![e.w2.rows, e.w2.cols], &e.w2.data),
            ("encoder.b2", vec![e.b2.len()], &e.b2),
        ];
        match &self.head {
            ProjectionHead::Identity => {}
            ProjectionHead::Linear { a, c } => {
                out.push(("head.a", vec![a.rows, a.cols], &a.data));
                out.push(("head.c", vec![c.len()], c));
            }
            ProjectionHead::Mlp { a1, c1, a2, c2, .. } => {
                out.push(("head.a1", vec![a1.rows, a1.cols], &a1.data));
                out.push(("head.c1", vec![c1.len()], c1));
                out.push(("head.a2", vec![a2.rows, a2.cols], &a2.data));
                out.push(("head.c2", vec![c2.len()], c2));
            }
        }
        out
    }

    /// Mutable parameter slices in the order of [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let e = &mut self.encoder;
        let mut out: Vec<&mut [f64]> = vec![&mut e.w1.data, &mut e.b1, &mut e.w2.data, &mut e.b2];
        match &mut self.head {
            ProjectionHead::Identity => {}
            ProjectionHead::Linear { a, c } => {
                out.push(&mut a.data);
                out.push(c);
            }
            ProjectionHead::Mlp { a1, c1, a2, c2, .. } => {
                out.push(&mut a1.data);
                out.push(c1);
                out.push(&mut a2.data);
                out.push(c2);
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// Parameters in the first [`ENCODER_TENSORS`] tensors.
    pub fn encoder_params(&self) -> usize {
        self.tensors()[..ENCODER_TENSORS].iter().map(|t| t.2.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|t| t.2.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        let tensors = self.tensors();
        ParamSnapshot {
            head: self.head.kind(),
            dropout: self.encoder.dropout,
            layout: tensors
                .iter()
                .map(|(name, shape, _)| ParamEntry {
                    name: name.to_string(),
                    shape: shape.clone(),
                })
                .collect(),
            values: tensors.into_iter().flat_map(|t| t.2.to_vec()).collect(),
        }
    }

    pub fn from_snapshot(s: &ParamSnapshot) -> Result<Self> {
        let corrupt = |m: &str| Error::Corrupt(format!("parameter snapshot: {m}"));
        let shape_of = |name: &str| -> Result<&[usize]> {
            s.layout
                .iter()
                .find(|e| e.name == name)
                .map(|e| e.shape.as_slice())
                .ok_or_else(|| corrupt(&format!("missing tensor {name}")))
        };
        let w1 = shape_of("encoder.w1")?;
        let (h, d_base) = match w1 {
            [h, d] => (*h, *d),
            _ => return Err(corrupt("encoder.w1 is not a matrix")),
        };
        let (proj_dim, mlp_hidden) = match s.head {
            HeadKind::Identity => (d_base, 1),
            HeadKind::Linear => (shape_of("head.a")?[0], 1),
            HeadKind::Mlp => {
                let a2 = shape_of("head.a2")?;
                (a2[0], *a2.get(1).ok_or_else(|| corrupt("head.a2 is not a matrix"))?)
            }
        };
        let config = ModelConfig {
            hidden: Some(h),
            dropout: s.dropout,
            head: s.head,
            proj_dim,
            mlp_hidden,
        };
        if s.head == HeadKind::Mlp && config.mlp_hidden_for(d_base) != mlp_hidden {
            return Err(corrupt("MLP hidden width exceeds 4 * d_base"));
        }
        let mut model = RetrofitModel::new(&config, d_base, 0)?;
        let expected: Vec<ParamEntry> = model
            .tensors()
            .iter()
            .map(|(name, shape, _)| ParamEntry {
                name: name.to_string(),
                shape: shape.clone(),
            })
            .collect();
        if expected != s.layout {
            return Err(corrupt("layout does not match a known model shape"));
        }
        if model.num_params() != s.values.len() {
            return Err(corrupt("value count does not match layout"));
        }
        let mut offset = 0;
        for t in model.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&s.values[offset..offset + n]);
            offset += n;
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Flat parameter vector plus the layout needed to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub head: HeadKind,
    pub dropout: f64,
    pub layout: Vec<ParamEntry>,
    pub values: Vec<f64>,
}

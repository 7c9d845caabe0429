//! Tokenizer, vocabulary and a compact embedding-bag classifier.
//!
//! The classifier mean-pools token embeddings, applies one ReLU hidden layer
//! and a linear output layer:
//!
//! ```text
//! x      = mean(E[ids])            d
//! pre    = W1ᵀ x + b1              h
//! hidden = relu(pre)               h
//! logits = W2ᵀ hidden + b2         C
//! probs  = softmax(logits)
//! ```
//!
//! Parameters are generic over the float type: training uses `f32`, gradient
//! checks instantiate the same code with `f64`.

mod checkpoint;
mod vocab;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC};
pub use vocab::{tokenize, words, Vocab, UNK, UNK_ID};

use crate::seed;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("empty token sequence")]
    EmptyInput,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    IdOutOfRange { id: usize, vocab: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not a checkpoint (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("truncated checkpoint: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint dimension disagreement: {0}")]
    DimensionMismatch(String),
    #[error("invalid dimensions: {0}")]
    BadDims(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EncoderError> = std::result::Result<T, E>;

/// Float types the model can run in.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

fn cast<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite value fits in float type")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.embed == 0 || self.hidden == 0 || self.classes < 2 {
            return Err(EncoderError::BadDims(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.vocab * self.embed
            + self.embed * self.hidden
            + self.hidden
            + self.hidden * self.classes
            + self.classes
    }
}

/// Embedding `V×d`, `W1: d×h`, `b1: h`, `W2: h×C`, `b2: C`, all row-major.
/// The same layout holds gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F = f32> {
    dims: ModelDims,
    pub embedding: Vec<F>,
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: Vec<F>,
}

pub const TENSOR_NAMES: [&str; 5] = ["embedding", "w1", "b1", "w2", "b2"];

impl<F: Scalar> ModelParams<F> {
    pub fn zeros(dims: ModelDims) -> Self {
        let z = |n| vec![F::zero(); n];
        Self {
            dims,
            embedding: z(dims.vocab * dims.embed),
            w1: z(dims.embed * dims.hidden),
            b1: z(dims.hidden),
            w2: z(dims.hidden * dims.classes),
            b2: z(dims.classes),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = seed::rng(seed);
        let mut p = Self::zeros(dims);
        let mut fill = |buf: &mut [F], fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound);
            for x in buf.iter_mut() {
                *x = cast(u.sample(&mut rng));
            }
        };
        fill(&mut p.embedding, dims.vocab, dims.embed);
        fill(&mut p.w1, dims.embed, dims.hidden);
        fill(&mut p.w2, dims.hidden, dims.classes);
        Ok(p)
    }

    pub(crate) fn from_parts(dims: ModelDims, tensors: [Vec<F>; 5]) -> Result<Self> {
        let [embedding, w1, b1, w2, b2] = tensors;
        let p = Self {
            dims,
            embedding,
            w1,
            b1,
            w2,
            b2,
        };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn tensors(&self) -> [(&'static str, &[F]); 5] {
        [
            (TENSOR_NAMES[0], &self.embedding),
            (TENSOR_NAMES[1], &self.w1),
            (TENSOR_NAMES[2], &self.b1),
            (TENSOR_NAMES[3], &self.w2),
            (TENSOR_NAMES[4], &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [F]); 5] {
        [
            (TENSOR_NAMES[0], &mut self.embedding),
            (TENSOR_NAMES[1], &mut self.w1),
            (TENSOR_NAMES[2], &mut self.b1),
            (TENSOR_NAMES[3], &mut self.w2),
            (TENSOR_NAMES[4], &mut self.b2),
        ]
    }

    fn check_shapes(&self) -> Result<()> {
        let d = self.dims;
        let expected = [
            d.vocab * d.embed,
            d.embed * d.hidden,
            d.hidden,
            d.hidden * d.classes,
            d.classes,
        ];
        for ((name, t), n) in self.tensors().into_iter().zip(expected) {
            if t.len() != n {
                return Err(EncoderError::ShapeMismatch(format!(
                    "{name} has {} entries, dims {:?} need {n}",
                    t.len(),
                    d
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape<G: Scalar>(&self, other: &ModelParams<G>) -> Result<()> {
        if self.dims != other.dims {
            return Err(EncoderError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Converts every entry to another float type.
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let conv = |v: &[F]| -> Vec<G> {
            v.iter()
                .map(|x| G::from_f64(x.to_f64().expect("float")).expect("float"))
                .collect()
        };
        ModelParams {
            dims: self.dims,
            embedding: conv(&self.embedding),
            w1: conv(&self.w1),
            b1: conv(&self.b1),
            w2: conv(&self.w2),
            b2: conv(&self.b2),
        }
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill(F::zero());
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: F) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + scale * *y;
            }
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }

    /// Flat view over all entries in tensor order.
    pub fn iter(&self) -> impl Iterator<Item = F> + '_ {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied())
    }

    /// Mutable access to the `i`th entry in [`ModelParams::iter`] order.
    pub fn entry_mut(&mut self, mut i: usize) -> &mut F {
        for (_, t) in self.tensors_mut() {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<F = f32> {
    pub ids: Vec<usize>,
    pub pooled: Vec<F>,
    pub pre_activation: Vec<F>,
    pub hidden: Vec<F>,
    pub logits: Vec<F>,
}

/// Softmax with max subtraction.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = exps.iter().copied().fold(F::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax computed as `z - max - ln Σ exp(z - max)`.
pub fn log_softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let lse = logits
        .iter()
        .map(|&z| (z - max).exp())
        .fold(F::zero(), |a, b| a + b)
        .ln();
    logits.iter().map(|&z| z - max - lse).collect()
}

/// Class probabilities for one token sequence.
pub fn forward<F: Scalar>(params: &ModelParams<F>, ids: &[usize]) -> Result<(Vec<F>, ForwardTrace<F>)> {
    let trace = forward_trace(params, ids)?;
    Ok((softmax(&trace.logits), trace))
}

pub fn forward_trace<F: Scalar>(params: &ModelParams<F>, ids: &[usize]) -> Result<ForwardTrace<F>> {
    let ModelDims {
        vocab,
        embed: d,
        hidden: h,
        classes: c,
    } = params.dims;
    if ids.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    let mut pooled = vec![F::zero(); d];
    for &id in ids {
        if id >= vocab {
            return Err(EncoderError::IdOutOfRange { id, vocab });
        }
        let row = &params.embedding[id * d..(id + 1) * d];
        for (p, &e) in pooled.iter_mut().zip(row) {
            *p = *p + e;
        }
    }
    let inv_n = F::one() / cast::<F>(ids.len() as f64);
    for p in &mut pooled {
        *p = *p * inv_n;
    }

    let mut pre = params.b1.clone();
    for (i, &x) in pooled.iter().enumerate() {
        let row = &params.w1[i * h..(i + 1) * h];
        for (acc, &w) in pre.iter_mut().zip(row) {
            *acc = *acc + x * w;
        }
    }
    let hidden: Vec<F> = pre.iter().map(|&v| v.max(F::zero())).collect();

    let mut logits = params.b2.clone();
    for (j, &a) in hidden.iter().enumerate() {
        if a == F::zero() {
            continue;
        }
        let row = &params.w2[j * c..(j + 1) * c];
        for (acc, &w) in logits.iter_mut().zip(row) {
            *acc = *acc + a * w;
        }
    }
    Ok(ForwardTrace {
        ids: ids.to_vec(),
        pooled,
        pre_activation: pre,
        hidden,
        logits,
    })
}

/// Gradients of a loss with respect to every parameter, given the loss
/// gradient with respect to the logits of `trace`.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    trace: &ForwardTrace<F>,
    dlogits: &[F],
) -> Result<ModelParams<F>> {
    let mut grads = ModelParams::zeros(params.dims);
    backward_into(params, trace, dlogits, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but adds into an existing gradient buffer.
pub fn backward_into<F: Scalar>(
    params: &ModelParams<F>,
    trace: &ForwardTrace<F>,
    dlogits: &[F],
    grads: &mut ModelParams<F>,
) -> Result<()> {
    let ModelDims {
        vocab,
        embed: d,
        hidden: h,
        classes: c,
    } = params.dims;
    params.same_shape(grads)?;
    if dlogits.len() != c
        || trace.logits.len() != c
        || trace.hidden.len() != h
        || trace.pre_activation.len() != h
        || trace.pooled.len() != d
    {
        return Err(EncoderError::ShapeMismatch(
            "trace or dlogits do not match model dims".into(),
        ));
    }
    if trace.ids.is_empty() {
        return Err(EncoderError::EmptyInput);
    }
    if let Some(&id) = trace.ids.iter().find(|&&id| id >= vocab) {
        return Err(EncoderError::IdOutOfRange { id, vocab });
    }
    if dlogits.iter().all(|g| *g == F::zero()) {
        return Ok(());
    }

    for (g, &dl) in grads.b2.iter_mut().zip(dlogits) {
        *g = *g + dl;
    }
    let mut dpre = vec![F::zero(); h];
    for j in 0..h {
        let w_row = &params.w2[j * c..(j + 1) * c];
        let a = trace.hidden[j];
        if a != F::zero() {
            let g_row = &mut grads.w2[j * c..(j + 1) * c];
            for (g, &dl) in g_row.iter_mut().zip(dlogits) {
                *g = *g + a * dl;
            }
        }
        if trace.pre_activation[j] > F::zero() {
            dpre[j] = w_row
                .iter()
                .zip(dlogits)
                .fold(F::zero(), |acc, (&w, &dl)| acc + w * dl);
        }
    }
    for (g, &dp) in grads.b1.iter_mut().zip(&dpre) {
        *g = *g + dp;
    }
    let mut dx = vec![F::zero(); d];
    for i in 0..d {
        let x = trace.pooled[i];
        let w_row = &params.w1[i * h..(i + 1) * h];
        let g_row = &mut grads.w1[i * h..(i + 1) * h];
        for (g, &dp) in g_row.iter_mut().zip(&dpre) {
            *g = *g + x * dp;
        }
        dx[i] = dot(w_row, &dpre);
    }
    let inv_n = F::one() / cast::<F>(trace.ids.len() as f64);
    for &id in &trace.ids {
        let g_row = &mut grads.embedding[id * d..(id + 1) * d];
        for (g, &v) in g_row.iter_mut().zip(&dx) {
            *g = *g + v * inv_n;
        }
    }
    Ok(())
}

/// Dot product with eight interleaved partial sums, combined in a fixed
/// order so results are reproducible.
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + xa[k] * xb[k];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    let pairs = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (pairs[0] + pairs[2]) + (pairs[1] + pairs[3]) + tail
}

/// Index of the largest probability; ties go to the smallest index.
pub fn argmax<F: PartialOrd + Copy>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn predict<F: Scalar>(params: &ModelParams<F>, ids: &[usize]) -> Result<usize> {
    Ok(argmax(&forward_trace(params, ids)?.logits))
}

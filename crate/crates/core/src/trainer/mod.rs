//! One-hidden-layer softmax classifier trained on weak labels.
//!
//! Training runs in two phases: [`init_train`] fits the covered samples'
//! weak labels, then [`self_train`] repeatedly pseudo-labels the samples
//! the model is confident about and refits on them with a confidence
//! regularizer and a margin contrastive term on the hidden layer.

mod checkpoint;
mod loss;
mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use loss::{grad_check, loss_and_grad, Batch, Gradient, LossWeights};
pub use train::{balance, confident_set, init_train, one_hot, self_train, sharpen, RoundStats, TrainReport};

use crate::features::SparseVector;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("feature dimension {got} does not match model dimension {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("class {0} has no covered training samples")]
    EmptyClass(usize),
    #[error("no covered training samples")]
    NoCoveredSamples,
    #[error("loss diverged ({loss}) in {phase} epoch {epoch}, batch {batch}")]
    Diverged {
        phase: &'static str,
        epoch: usize,
        batch: usize,
        loss: String,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hashed feature dimension.
    pub dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub init_epochs: usize,
    pub epochs_per_round: usize,
    pub rounds: usize,
    /// Minimum max-probability for a sample to join the confident set.
    pub confidence_threshold: f64,
    /// Weight of KL(uniform || p).
    pub lambda_r: f64,
    /// Weight of the contrastive term.
    pub lambda_c: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub sharpen_temperature: f64,
    /// Divide sharpened pseudo-labels by each class's soft frequency over
    /// the confident set before renormalizing.
    pub balance_pseudo_labels: bool,
    /// Half-width of the uniform init for the first layer.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 1 << 16,
            hidden: 64,
            learning_rate: 0.1,
            init_epochs: 30,
            epochs_per_round: 1,
            rounds: 5,
            confidence_threshold: 0.8,
            lambda_r: 0.1,
            lambda_c: 0.1,
            margin: 1.0,
            batch_size: 32,
            sharpen_temperature: 0.5,
            balance_pseudo_labels: true,
            init_scale: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.dim < 2 {
            return fail("dim must be at least 2");
        }
        if self.hidden == 0 {
            return fail("hidden must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return fail("confidence_threshold must lie in [0, 1]");
        }
        if !(self.lambda_r >= 0.0 && self.lambda_c >= 0.0) {
            return fail("loss weights must be non-negative");
        }
        if !(self.margin > 0.0) {
            return fail("margin must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if !(self.sharpen_temperature > 0.0) {
            return fail("sharpen_temperature must be positive");
        }
        if !(self.init_scale >= 0.0) {
            return fail("init_scale must be non-negative");
        }
        Ok(())
    }

    pub fn weights<F: Real>(&self) -> LossWeights<F> {
        LossWeights {
            lambda_r: F::lit(self.lambda_r),
            lambda_c: F::lit(self.lambda_c),
            margin: F::lit(self.margin),
        }
    }
}

/// Classifier parameters. `w1` is stored feature-major (`w1[d * hidden + h]`
/// is the weight from feature `d` to hidden unit `h`) so sparse inputs touch
/// contiguous memory; `w2` is class-major (`w2[c * hidden + h]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: Vec<F>,
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub pre: Vec<F>,
    pub hidden: Vec<F>,
    pub logits: Vec<F>,
    pub proba: Vec<F>,
}

pub(crate) fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|l| (*l - max).exp()).collect();
    let z: F = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / z).collect()
}

impl<F: Real> Mlp<F> {
    pub fn zeros(dim: usize, hidden: usize, classes: usize) -> Self {
        Self {
            dim,
            hidden,
            classes,
            w1: vec![F::zero(); dim * hidden],
            b1: vec![F::zero(); hidden],
            w2: vec![F::zero(); classes * hidden],
            b2: vec![F::zero(); classes],
        }
    }

    /// Uniform init: first layer in `±init_scale`, second layer Glorot.
    pub fn random(dim: usize, hidden: usize, classes: usize, init_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut m = Self::zeros(dim, hidden, classes);
        if init_scale > 0.0 {
            for w in m.w1.iter_mut() {
                *w = F::lit(rng.random_range(-init_scale..init_scale));
            }
        }
        let a = (6.0 / (hidden + classes) as f64).sqrt();
        for w in m.w2.iter_mut() {
            *w = F::lit(rng.random_range(-a..a));
        }
        m
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn forward(&self, x: &SparseVector<F>) -> Result<Forward<F>, TrainError> {
        if x.dim() != self.dim {
            return Err(TrainError::ShapeMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let h = self.hidden;
        let mut pre = self.b1.clone();
        for &(d, v) in x.entries() {
            let col = &self.w1[d as usize * h..(d as usize + 1) * h];
            for (p, w) in pre.iter_mut().zip(col) {
                *p = *p + *w * v;
            }
        }
        let hidden: Vec<F> = pre.iter().map(|p| p.max(F::zero())).collect();
        let logits: Vec<F> = (0..self.classes)
            .map(|c| {
                let row = &self.w2[c * h..(c + 1) * h];
                row.iter().zip(&hidden).map(|(w, a)| *w * *a).sum::<F>() + self.b2[c]
            })
            .collect();
        let proba = softmax(&logits);
        Ok(Forward {
            pre,
            hidden,
            logits,
            proba,
        })
    }

    /// `softmax(W2 · relu(W1 · x + b1) + b2)`
    pub fn predict_proba(&self, x: &SparseVector<F>) -> Result<Vec<F>, TrainError> {
        Ok(self.forward(x)?.proba)
    }

    pub fn predict(&self, x: &SparseVector<F>) -> Result<usize, TrainError> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    /// SHA-256 over every parameter as little-endian `f64`.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2) {
            hasher.update(v.to_f64().expect("finite").to_le_bytes());
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn apply(&mut self, grad: &Gradient<F>, lr: F) {
        let h = self.hidden;
        for (d, g) in &grad.w1 {
            let col = &mut self.w1[*d as usize * h..(*d as usize + 1) * h];
            for (w, g) in col.iter_mut().zip(g) {
                *w = *w - lr * *g;
            }
        }
        for (w, g) in self.b1.iter_mut().zip(&grad.b1) {
            *w = *w - lr * *g;
        }
        for (w, g) in self.w2.iter_mut().zip(&grad.w2) {
            *w = *w - lr * *g;
        }
        for (w, g) in self.b2.iter_mut().zip(&grad.b2) {
            *w = *w - lr * *g;
        }
    }
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

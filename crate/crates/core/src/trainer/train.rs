use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, Batch, LossWeights};
use super::{rng_for, Mlp, TrainConfig, TrainError};
use crate::features::SparseVector;
use crate::scalar::Real;

pub fn one_hot<F: Real>(class: usize, classes: usize) -> Vec<F> {
    (0..classes)
        .map(|c| if c == class { F::one() } else { F::zero() })
        .collect()
}

/// `p^(1/t)` renormalized; `t < 1` sharpens and preserves the argmax.
pub fn sharpen<F: Real>(p: &[F], temperature: F) -> Vec<F> {
    let powered: Vec<F> = p.iter().map(|v| v.powf(F::one() / temperature)).collect();
    let z: F = powered.iter().cloned().sum();
    if z > F::zero() {
        powered.into_iter().map(|v| v / z).collect()
    } else {
        p.to_vec()
    }
}

/// Reweights each row by `1 / f_c`, where `f_c` is the total probability
/// mass of class `c` across `rows`, then renormalizes the row.
pub fn balance<F: Real>(rows: &mut [Vec<F>], probs_mass: &[F]) {
    for row in rows.iter_mut() {
        for (v, f) in row.iter_mut().zip(probs_mass) {
            if *f > F::zero() {
                *v = *v / *f;
            }
        }
        let z: F = row.iter().cloned().sum();
        if z > F::zero() {
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
    }
}

/// Indices whose largest class probability reaches `threshold`.
pub fn confident_set<F: Real>(probs: &[Vec<F>], threshold: F) -> Vec<usize> {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.iter().cloned().fold(F::zero(), F::max) >= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn argmax<F: Real>(p: &[F]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

fn common_dim<F: Real>(features: &[SparseVector<F>]) -> Result<usize, TrainError> {
    let dim = features.first().map(|f| f.dim()).ok_or(TrainError::NoCoveredSamples)?;
    if let Some(bad) = features.iter().find(|f| f.dim() != dim) {
        return Err(TrainError::ShapeMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    Ok(dim)
}

/// One pass of mini-batch descent over `order`. Returns the mean batch loss.
fn epoch<F: Real>(
    params: &mut Mlp<F>,
    features: &[SparseVector<F>],
    targets: &[Vec<F>],
    order: &[usize],
    weights: &LossWeights<F>,
    cfg: &TrainConfig,
    phase: &'static str,
    epoch_no: usize,
) -> Result<F, TrainError> {
    let lr = F::lit(cfg.learning_rate);
    let mut total = F::zero();
    let mut batches = 0usize;
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let batch = Batch {
            features: chunk.iter().map(|&i| &features[i]).collect(),
            targets: chunk.iter().map(|&i| targets[i].clone()).collect(),
        };
        let (loss, grad) = loss_and_grad(params, &batch, weights)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged {
                phase,
                epoch: epoch_no,
                batch: b,
                loss: format!("{loss}"),
            });
        }
        params.apply(&grad, lr);
        total = total + loss;
        batches += 1;
    }
    if !params.is_finite() {
        return Err(TrainError::Diverged {
            phase,
            epoch: epoch_no,
            batch: batches,
            loss: "non-finite parameters".into(),
        });
    }
    Ok(if batches == 0 {
        F::zero()
    } else {
        total / F::from_usize(batches).expect("batch count")
    })
}

/// Fits the weak labels of covered samples (`Some` targets) by mini-batch
/// descent on mean cross-entropy. Every class needs at least one covered
/// sample.
pub fn init_train<F: Real>(
    features: &[SparseVector<F>],
    targets: &[Option<Vec<F>>],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<Mlp<F>, TrainError> {
    cfg.validate()?;
    if features.len() != targets.len() {
        return Err(TrainError::Config(format!(
            "{} feature rows but {} targets",
            features.len(),
            targets.len()
        )));
    }
    let covered: Vec<usize> = (0..targets.len()).filter(|&i| targets[i].is_some()).collect();
    if covered.is_empty() {
        return Err(TrainError::NoCoveredSamples);
    }
    let dense: Vec<Vec<F>> = targets
        .iter()
        .map(|t| t.clone().unwrap_or_else(|| vec![F::zero(); classes]))
        .collect();
    for c in 0..classes {
        if !covered.iter().any(|&i| argmax(&dense[i]) == c) {
            return Err(TrainError::EmptyClass(c));
        }
    }
    let dim = common_dim(features)?;
    let mut params = Mlp::random(dim, cfg.hidden, classes, cfg.init_scale, &mut rng_for(cfg.seed, 0));
    let mut rng = rng_for(cfg.seed, 1);
    let weights = LossWeights::cross_entropy_only();
    let mut order = covered;
    for e in 0..cfg.init_epochs {
        order.shuffle(&mut rng);
        epoch(&mut params, features, &dense, &order, &weights, cfg, "init", e)?;
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    pub confident: usize,
    pub mean_confidence: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub rounds: Vec<RoundStats>,
    /// Round at which the confident set came up empty.
    pub stopped_early_at: Option<usize>,
    pub checksum: String,
}

/// Confidence-thresholded self-training over every sample, covered or not.
///
/// Each round predicts all samples, keeps those with max probability at
/// least `confidence_threshold`, sharpens their predictions into soft
/// pseudo-labels and runs `epochs_per_round` epochs on the full loss.
pub fn self_train<F: Real>(
    params: &Mlp<F>,
    features: &[SparseVector<F>],
    cfg: &TrainConfig,
) -> Result<(Mlp<F>, TrainReport), TrainError> {
    cfg.validate()?;
    let mut params = params.clone();
    let weights = cfg.weights::<F>();
    let threshold = F::lit(cfg.confidence_threshold);
    let temperature = F::lit(cfg.sharpen_temperature);
    let mut rng = rng_for(cfg.seed, 2);
    let mut rounds = Vec::new();
    let mut stopped_early_at = None;
    for round in 1..=cfg.rounds {
        let probs = features
            .par_iter()
            .map(|x| params.predict_proba(x))
            .collect::<Result<Vec<_>, _>>()?;
        let confident = confident_set(&probs, threshold);
        if confident.is_empty() {
            stopped_early_at = Some(round);
            break;
        }
        let mean_confidence = confident
            .iter()
            .map(|&i| probs[i].iter().cloned().fold(F::zero(), F::max).to_f64().unwrap_or(0.0))
            .sum::<f64>()
            / confident.len() as f64;
        let mut targets: Vec<Vec<F>> = probs.iter().map(|p| sharpen(p, temperature)).collect();
        if cfg.balance_pseudo_labels {
            let mut mass = vec![F::zero(); params.classes];
            for &i in &confident {
                for (m, p) in mass.iter_mut().zip(&probs[i]) {
                    *m = *m + *p;
                }
            }
            balance(&mut targets, &mass);
        }
        let mut order = confident.clone();
        let mut loss = F::zero();
        for e in 0..cfg.epochs_per_round {
            order.shuffle(&mut rng);
            loss = epoch(&mut params, features, &targets, &order, &weights, cfg, "self-train", e)?;
        }
        rounds.push(RoundStats {
            round,
            confident: confident.len(),
            mean_confidence,
            loss: loss.to_f64().unwrap_or(f64::NAN),
        });
    }
    let checksum = params.checksum();
    Ok((
        params,
        TrainReport {
            rounds,
            stopped_early_at,
            checksum,
        },
    ))
}

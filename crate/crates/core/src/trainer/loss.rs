use std::collections::BTreeMap;

use rand::seq::index::sample;

use super::{rng_for, Mlp, TrainError};
use crate::features::SparseVector;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<F> {
    pub lambda_r: F,
    pub lambda_c: F,
    pub margin: F,
}

impl<F: Real> LossWeights<F> {
    pub fn cross_entropy_only() -> Self {
        Self {
            lambda_r: F::zero(),
            lambda_c: F::zero(),
            margin: F::one(),
        }
    }
}

/// Samples with target distributions. The contrastive term pairs samples by
/// the argmax of their targets.
#[derive(Debug, Clone)]
pub struct Batch<'a, F> {
    pub features: Vec<&'a SparseVector<F>>,
    pub targets: Vec<Vec<F>>,
}

impl<F> Batch<'_, F> {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Gradient with a sparse first layer: only columns of features present in
/// the batch are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<F> {
    pub w1: BTreeMap<u32, Vec<F>>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: Vec<F>,
}

fn hard(target: &[impl PartialOrd]) -> usize {
    let mut best = 0;
    for i in 1..target.len() {
        if target[i] > target[best] {
            best = i;
        }
    }
    best
}

/// Mean over the batch of `CE(q, p) + lambda_r * KL(u || p)`, plus
/// `lambda_c` times the mean over in-batch pairs of `|h_i - h_j|^2` for equal
/// pseudo-labels and `max(0, margin - |h_i - h_j|)^2` otherwise.
pub fn loss_and_grad<F: Real>(
    params: &Mlp<F>,
    batch: &Batch<'_, F>,
    weights: &LossWeights<F>,
) -> Result<(F, Gradient<F>), TrainError> {
    let n = batch.len();
    let (hd, c) = (params.hidden, params.classes);
    let mut grad = Gradient {
        w1: BTreeMap::new(),
        b1: vec![F::zero(); hd],
        w2: vec![F::zero(); c * hd],
        b2: vec![F::zero(); c],
    };
    if n == 0 {
        return Ok((F::zero(), grad));
    }
    let nf = F::from_usize(n).expect("batch size");
    let cf = F::from_usize(c).expect("class count");
    let uniform = F::one() / cf;

    let fwd = batch
        .features
        .iter()
        .map(|x| params.forward(x))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<usize> = batch.targets.iter().map(|t| hard(t)).collect();

    let mut loss = F::zero();
    // dL/dh for each sample
    let mut dh: Vec<Vec<F>> = vec![vec![F::zero(); hd]; n];
    for i in 0..n {
        let p = &fwd[i].proba;
        let q = &batch.targets[i];
        let tiny = F::min_positive_value();
        let mut ce = F::zero();
        let mut kl = F::zero();
        for k in 0..c {
            let logp = p[k].max(tiny).ln();
            ce = ce - q[k] * logp;
            kl = kl + uniform * (uniform.ln() - logp);
        }
        loss = loss + (ce + weights.lambda_r * kl) / nf;
        for k in 0..c {
            let dz = ((p[k] - q[k]) + weights.lambda_r * (p[k] - uniform)) / nf;
            grad.b2[k] = grad.b2[k] + dz;
            for j in 0..hd {
                grad.w2[k * hd + j] = grad.w2[k * hd + j] + dz * fwd[i].hidden[j];
                dh[i][j] = dh[i][j] + dz * params.w2[k * hd + j];
            }
        }
    }

    if weights.lambda_c > F::zero() && n > 1 {
        let pairs = F::from_usize(n * (n - 1) / 2).expect("pair count");
        let scale = weights.lambda_c / pairs;
        let two = F::lit(2.0);
        for i in 0..n {
            for j in i + 1..n {
                let diff: Vec<F> = fwd[i]
                    .hidden
                    .iter()
                    .zip(&fwd[j].hidden)
                    .map(|(a, b)| *a - *b)
                    .collect();
                let sq: F = diff.iter().map(|d| *d * *d).sum();
                // coefficient on (h_i - h_j) in dL/dh_i
                let coef = if labels[i] == labels[j] {
                    loss = loss + scale * sq;
                    two
                } else {
                    let dist = sq.sqrt();
                    let gap = weights.margin - dist;
                    if gap > F::zero() && dist > F::zero() {
                        loss = loss + scale * gap * gap;
                        -two * gap / dist
                    } else {
                        if gap > F::zero() {
                            loss = loss + scale * gap * gap;
                        }
                        F::zero()
                    }
                };
                for (k, d) in diff.iter().enumerate() {
                    let g = scale * coef * *d;
                    dh[i][k] = dh[i][k] + g;
                    dh[j][k] = dh[j][k] - g;
                }
            }
        }
    }

    for i in 0..n {
        let dpre: Vec<F> = dh[i]
            .iter()
            .zip(&fwd[i].pre)
            .map(|(g, p)| if *p > F::zero() { *g } else { F::zero() })
            .collect();
        for (b, g) in grad.b1.iter_mut().zip(&dpre) {
            *b = *b + *g;
        }
        for &(d, v) in batch.features[i].entries() {
            let col = grad.w1.entry(d).or_insert_with(|| vec![F::zero(); hd]);
            for (w, g) in col.iter_mut().zip(&dpre) {
                *w = *w + *g * v;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    W1(u32, usize),
    B1(usize),
    W2(usize),
    B2(usize),
}

fn param_mut<F>(m: &mut Mlp<F>, slot: Slot) -> &mut F {
    match slot {
        Slot::W1(d, h) => &mut m.w1[d as usize * m.hidden + h],
        Slot::B1(h) => &mut m.b1[h],
        Slot::W2(i) => &mut m.w2[i],
        Slot::B2(i) => &mut m.b2[i],
    }
}

fn analytic<F: Real>(g: &Gradient<F>, slot: Slot) -> F {
    match slot {
        Slot::W1(d, h) => g.w1.get(&d).map_or(F::zero(), |col| col[h]),
        Slot::B1(h) => g.b1[h],
        Slot::W2(i) => g.w2[i],
        Slot::B2(i) => g.b2[i],
    }
}

/// Compares the analytic gradient with central finite differences (step
/// `1e-4`) on `n_checks` parameters drawn at random from those the batch can
/// influence. Returns the largest relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F: Real>(
    params: &Mlp<F>,
    batch: &Batch<'_, F>,
    weights: &LossWeights<F>,
    n_checks: usize,
    seed: u64,
) -> Result<F, TrainError> {
    let (_, grad) = loss_and_grad(params, batch, weights)?;
    let mut slots: Vec<Slot> = Vec::new();
    for d in grad.w1.keys() {
        slots.extend((0..params.hidden).map(|h| Slot::W1(*d, h)));
    }
    slots.extend((0..params.hidden).map(Slot::B1));
    slots.extend((0..params.w2.len()).map(Slot::W2));
    slots.extend((0..params.classes).map(Slot::B2));

    let mut rng = rng_for(seed, 7);
    let picks: Vec<usize> = if slots.len() <= n_checks {
        (0..slots.len()).collect()
    } else {
        sample(&mut rng, slots.len(), n_checks).into_vec()
    };

    let step = F::lit(1e-4);
    let floor = F::lit(1e-8);
    let mut probe = params.clone();
    let mut worst = F::zero();
    for i in picks {
        let slot = slots[i];
        let original = *param_mut(&mut probe, slot);
        *param_mut(&mut probe, slot) = original + step;
        let (up, _) = loss_and_grad(&probe, batch, weights)?;
        *param_mut(&mut probe, slot) = original - step;
        let (down, _) = loss_and_grad(&probe, batch, weights)?;
        *param_mut(&mut probe, slot) = original;
        let numeric = (up - down) / (step + step);
        let a = analytic(&grad, slot);
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

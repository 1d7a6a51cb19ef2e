//! Synthetic noisy-label benchmark for the trainer.
//!
//! Two classes, each with its own cue vocabulary; every sample mixes a few
//! cue words of its class with shared filler words. Weak labels cover a
//! random subset and are flipped uniformly at random at a given rate.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::TokenSequence;
use crate::features::{featurize, SparseVector};
use crate::scalar::Real;
use crate::trainer::{one_hot, rng_for};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub train: usize,
    pub test: usize,
    pub cue_vocab: usize,
    pub shared_vocab: usize,
    pub cues_per_sample: usize,
    pub shared_per_sample: usize,
    pub coverage: f64,
    pub noise: f64,
    pub dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            train: 500,
            test: 500,
            cue_vocab: 10,
            shared_vocab: 300,
            cues_per_sample: 3,
            shared_per_sample: 4,
            coverage: 0.7,
            noise: 0.3,
            dim: 1 << 12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask<F> {
    pub train_x: Vec<SparseVector<F>>,
    pub train_gold: Vec<usize>,
    /// Noisy weak label per training sample; `None` where uncovered.
    pub weak: Vec<Option<usize>>,
    pub test_x: Vec<SparseVector<F>>,
    pub test_gold: Vec<usize>,
}

impl<F: Real> SyntheticTask<F> {
    pub fn generate(spec: &SyntheticSpec, seed: u64) -> Self {
        let mut rng = rng_for(seed, 100);
        let cues: Vec<Vec<String>> = (0..spec.classes)
            .map(|c| (0..spec.cue_vocab).map(|k| format!("c{c}w{k}")).collect())
            .collect();
        let shared: Vec<String> = (0..spec.shared_vocab).map(|k| format!("s{k}")).collect();
        let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
            let y = rng.random_range(0..spec.classes);
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..spec.cues_per_sample {
                words.push(cues[y].choose(rng).expect("cue vocabulary"));
            }
            for _ in 0..spec.shared_per_sample {
                words.push(shared.choose(rng).expect("shared vocabulary"));
            }
            for i in (1..words.len()).rev() {
                let j = rng.random_range(0..=i);
                words.swap(i, j);
            }
            (featurize(&TokenSequence::from_tokens(&words), spec.dim), y)
        };
        let (train_x, train_gold): (Vec<_>, Vec<_>) = (0..spec.train).map(|_| sample(&mut rng)).unzip();
        let (test_x, test_gold): (Vec<_>, Vec<_>) = (0..spec.test).map(|_| sample(&mut rng)).unzip();
        let weak = train_gold
            .iter()
            .map(|&y| {
                if rng.random::<f64>() >= spec.coverage {
                    return None;
                }
                if rng.random::<f64>() < spec.noise {
                    let other = rng.random_range(0..spec.classes - 1);
                    Some(if other >= y { other + 1 } else { other })
                } else {
                    Some(y)
                }
            })
            .collect();
        Self {
            train_x,
            train_gold,
            weak,
            test_x,
            test_gold,
        }
    }

    pub fn weak_targets(&self, classes: usize) -> Vec<Option<Vec<F>>> {
        self.weak.iter().map(|w| w.map(|c| one_hot(c, classes))).collect()
    }
}

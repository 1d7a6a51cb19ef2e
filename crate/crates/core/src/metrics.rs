//! Classification metrics, generic over the scalar so they can be checked
//! in exact rational arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClassLabel, LabelSchema};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {preds} predictions vs {gold} gold labels")]
    LengthMismatch { preds: usize, gold: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("class index {0} outside schema")]
    OutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub class: String,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    /// Gold count for this class, abstentions included.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub macro_f1: T,
    pub per_class: Vec<ClassMetrics<T>>,
    /// `confusion[gold][predicted]` over the samples that received a
    /// prediction.
    pub confusion: Vec<Vec<usize>>,
    /// Samples in the confusion matrix.
    pub n_samples: usize,
    /// Samples the evaluated source abstained on.
    pub abstained: usize,
    pub coverage: Option<T>,
}

impl<T: Scalar> EvalReport<T> {
    pub fn to_f64(&self) -> EvalReport<f64> {
        EvalReport {
            macro_f1: self.macro_f1.to_f64_lossy(),
            per_class: self
                .per_class
                .iter()
                .map(|c| ClassMetrics {
                    class: c.class.clone(),
                    precision: c.precision.to_f64_lossy(),
                    recall: c.recall.to_f64_lossy(),
                    f1: c.f1.to_f64_lossy(),
                    support: c.support,
                })
                .collect(),
            confusion: self.confusion.clone(),
            n_samples: self.n_samples,
            abstained: self.abstained,
            coverage: self.coverage.map(Scalar::to_f64_lossy),
        }
    }

    pub fn accuracy(&self) -> T {
        let correct: usize = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        ratio(correct, self.n_samples)
    }
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

fn check(n_classes: usize, idx: usize) -> Result<usize, MetricsError> {
    if idx < n_classes {
        Ok(idx)
    } else {
        Err(MetricsError::OutOfRange(idx))
    }
}

/// Core of both evaluators: `None` predictions are abstentions and count as
/// false negatives for their gold class.
pub fn evaluate_indices<T: Scalar>(
    preds: &[Option<usize>],
    gold: &[usize],
    class_names: &[String],
) -> Result<EvalReport<T>, MetricsError> {
    if preds.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            gold: gold.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let c = class_names.len();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut abstained_by_class = vec![0usize; c];
    for (p, g) in preds.iter().zip(gold) {
        let g = check(c, *g)?;
        match p {
            Some(p) => confusion[g][check(c, *p)?] += 1,
            None => abstained_by_class[g] += 1,
        }
    }
    let mut per_class = Vec::with_capacity(c);
    let mut f1_sum = T::zero();
    for k in 0..c {
        let tp = confusion[k][k];
        let predicted: usize = (0..c).map(|g| confusion[g][k]).sum();
        let emitted_gold: usize = confusion[k].iter().sum();
        let support = emitted_gold + abstained_by_class[k];
        let precision: T = ratio(tp, predicted);
        let recall: T = ratio(tp, support);
        let f1 = if precision + recall == T::zero() {
            T::zero()
        } else {
            T::from_count(2) * precision * recall / (precision + recall)
        };
        f1_sum = f1_sum + f1;
        per_class.push(ClassMetrics {
            class: class_names[k].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    let abstained: usize = abstained_by_class.iter().sum();
    let n_samples = preds.len() - abstained;
    Ok(EvalReport {
        macro_f1: f1_sum / T::from_count(c),
        per_class,
        confusion,
        n_samples,
        abstained,
        coverage: Some(ratio(n_samples, preds.len())),
    })
}

fn names(schema: &LabelSchema) -> Vec<String> {
    schema.classes().iter().map(|c| c.name.clone()).collect()
}

/// Per-class F1 (0/0 counts as 0) averaged over every schema class, present
/// in gold or not.
pub fn macro_f1<T: Scalar>(
    preds: &[ClassLabel],
    gold: &[ClassLabel],
    schema: &LabelSchema,
) -> Result<EvalReport<T>, MetricsError> {
    let preds: Vec<Option<usize>> = preds.iter().map(|p| Some(p.index)).collect();
    let gold: Vec<usize> = gold.iter().map(|g| g.index).collect();
    let mut report = evaluate_indices(&preds, &gold, &names(schema))?;
    report.coverage = None;
    Ok(report)
}

/// Evaluates a source on every test sample: abstentions are false negatives
/// for their gold class and contribute nothing to precision.
pub fn rule_baseline_eval<T: Scalar>(
    votes: &[Option<ClassLabel>],
    gold: &[ClassLabel],
    schema: &LabelSchema,
) -> Result<EvalReport<T>, MetricsError> {
    let preds: Vec<Option<usize>> = votes.iter().map(|v| v.as_ref().map(|c| c.index)).collect();
    let gold: Vec<usize> = gold.iter().map(|g| g.index).collect();
    evaluate_indices(&preds, &gold, &names(schema))
}

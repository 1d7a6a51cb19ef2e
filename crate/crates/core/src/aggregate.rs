//! Label matrix construction, vote aggregation and per-source statistics.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClassLabel, Dataset, LabelSchema};
use crate::metrics::{evaluate_indices, EvalReport};
use crate::prompts::argmax;
use crate::vote::{LabelVote, WeakSource};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no weak sources configured")]
    NoSources,
    #[error("gold labels ({gold}) do not align with {samples} samples")]
    GoldMismatch { gold: usize, samples: usize },
    #[error("matrix line {line}: {reason}")]
    Artifact { line: usize, reason: String },
}

/// Votes of every source on every sample; `votes[sample][source]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    pub sample_ids: Vec<String>,
    pub source_ids: Vec<String>,
    pub votes: Vec<Vec<LabelVote>>,
}

/// Runs every source over every utterance. A source error becomes an
/// annotated abstain; it never aborts the matrix.
pub fn build_matrix(dataset: &Dataset, sources: &[&dyn WeakSource]) -> Result<LabelMatrix, AggregateError> {
    if sources.is_empty() {
        return Err(AggregateError::NoSources);
    }
    let votes: Vec<Vec<LabelVote>> = dataset
        .utterances
        .par_iter()
        .map(|u| {
            sources
                .iter()
                .map(|s| match s.label(u) {
                    Ok(mut v) => {
                        v.source_id = s.id().to_string();
                        v
                    }
                    Err(e) => {
                        let kind = if e.transient { "transient" } else { "permanent" };
                        LabelVote::abstain(s.id()).with_note(format!("error ({kind}): {}", e.message))
                    }
                })
                .collect()
        })
        .collect();
    Ok(LabelMatrix {
        sample_ids: dataset.ids(),
        source_ids: sources.iter().map(|s| s.id().to_string()).collect(),
        votes,
    })
}

impl LabelMatrix {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_sources(&self) -> usize {
        self.source_ids.len()
    }

    pub fn column(&self, source: usize) -> Vec<Option<ClassLabel>> {
        self.votes.iter().map(|row| row[source].label.clone()).collect()
    }

    /// Appends the majority vote of the existing columns as an extra source.
    pub fn with_majority_column(&self, id: &str, schema: &LabelSchema) -> Self {
        let mut out = self.clone();
        out.source_ids.push(id.to_string());
        for row in out.votes.iter_mut() {
            let vote = match majority_vote(row, schema) {
                Some(label) => LabelVote::new(id, label, 1.0),
                None => LabelVote::abstain(id),
            };
            row.push(vote);
        }
        out
    }

    /// Line-per-sample records with votes, majority and soft aggregate.
    pub fn to_records(&self, schema: &LabelSchema) -> Vec<MatrixRecord> {
        self.sample_ids
            .iter()
            .zip(&self.votes)
            .map(|(id, row)| MatrixRecord {
                id: id.clone(),
                votes: row
                    .iter()
                    .map(|v| VoteRecord {
                        source: v.source_id.clone(),
                        label: v.label.as_ref().map(|l| l.name.clone()),
                        confidence: v.confidence,
                        note: v.note.clone(),
                    })
                    .collect(),
                majority: majority_vote(row, schema).map(|l| l.name),
                soft: soft_aggregate(row, schema),
            })
            .collect()
    }

    pub fn to_jsonl(&self, schema: &LabelSchema) -> String {
        let mut out = String::new();
        for rec in self.to_records(schema) {
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(input: &str, schema: &LabelSchema) -> Result<Self, AggregateError> {
        let mut sample_ids = Vec::new();
        let mut source_ids: Option<Vec<String>> = None;
        let mut votes = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| AggregateError::Artifact { line, reason };
            let rec: MatrixRecord = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            let ids: Vec<String> = rec.votes.iter().map(|v| v.source.clone()).collect();
            match &source_ids {
                None => source_ids = Some(ids),
                Some(prev) if *prev != ids => return Err(bad("source columns differ from first line".into())),
                Some(_) => {}
            }
            let mut row = Vec::with_capacity(rec.votes.len());
            for v in rec.votes {
                let mut vote = match v.label {
                    None => LabelVote::abstain(v.source),
                    Some(name) => {
                        let class = schema
                            .class(&name)
                            .cloned()
                            .ok_or_else(|| bad(format!("unknown label {name:?}")))?;
                        LabelVote::new(v.source, class, v.confidence)
                    }
                };
                vote.note = v.note;
                row.push(vote);
            }
            sample_ids.push(rec.id);
            votes.push(row);
        }
        Ok(Self {
            sample_ids,
            source_ids: source_ids.unwrap_or_default(),
            votes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub source: String,
    pub label: Option<String>,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub id: String,
    pub votes: Vec<VoteRecord>,
    pub majority: Option<String>,
    pub soft: Option<Vec<f64>>,
}

/// Plurality of non-abstain votes, confidences ignored. Ties between the
/// leaders, and rows with no votes, abstain.
pub fn majority_vote(row: &[LabelVote], schema: &LabelSchema) -> Option<ClassLabel> {
    let mut counts = vec![0usize; schema.len()];
    for v in row {
        if let Some(i) = v.class_index() {
            counts[i] += 1;
        }
    }
    let top = *counts.iter().max()?;
    if top == 0 || counts.iter().filter(|&&c| c == top).count() > 1 {
        return None;
    }
    schema.get(counts.iter().position(|&c| c == top)?).cloned()
}

/// Confidence-weighted vote mass per class, normalized. `None` when every
/// source abstains.
pub fn soft_aggregate(row: &[LabelVote], schema: &LabelSchema) -> Option<Vec<f64>> {
    let mut mass = vec![0.0; schema.len()];
    for v in row {
        if let Some(i) = v.class_index() {
            mass[i] += v.confidence;
        }
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(mass.into_iter().map(|m| m / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Hard label from plain majority vote; soft label is the vote-count
    /// distribution.
    #[default]
    Majority,
    /// Confidence-weighted distribution; hard label is its unique argmax.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub id: String,
    pub hard: Option<String>,
    pub soft: Option<Vec<f64>>,
}

fn unique_argmax(dist: &[f64]) -> Option<usize> {
    let best = argmax(dist);
    let ties = dist.iter().filter(|&&p| p == dist[best]).count();
    (ties == 1).then_some(best)
}

pub fn aggregate(matrix: &LabelMatrix, schema: &LabelSchema, mode: AggregationMode) -> Vec<AggregatedLabel> {
    matrix
        .sample_ids
        .iter()
        .zip(&matrix.votes)
        .map(|(id, row)| {
            let (hard, soft) = match mode {
                AggregationMode::Majority => {
                    let counted: Vec<LabelVote> = row
                        .iter()
                        .map(|v| LabelVote {
                            confidence: if v.is_abstain() { 0.0 } else { 1.0 },
                            ..v.clone()
                        })
                        .collect();
                    (majority_vote(row, schema), soft_aggregate(&counted, schema))
                }
                AggregationMode::Soft => {
                    let soft = soft_aggregate(row, schema);
                    let hard = soft
                        .as_deref()
                        .and_then(unique_argmax)
                        .and_then(|i| schema.get(i).cloned());
                    (hard, soft)
                }
            };
            AggregatedLabel {
                id: id.clone(),
                hard: hard.map(|h| h.name),
                soft,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceStats {
    pub source_id: String,
    pub coverage: f64,
    /// Macro-F1 over the samples this source labeled (and that have gold).
    pub covered_macro_f1: Option<f64>,
    pub covered_report: Option<EvalReport<f64>>,
}

pub fn source_stats(
    matrix: &LabelMatrix,
    gold: Option<&[Option<ClassLabel>]>,
    schema: &LabelSchema,
) -> Result<Vec<SourceStats>, AggregateError> {
    if let Some(g) = gold {
        if g.len() != matrix.n_samples() {
            return Err(AggregateError::GoldMismatch {
                gold: g.len(),
                samples: matrix.n_samples(),
            });
        }
    }
    let names: Vec<String> = schema.classes().iter().map(|c| c.name.clone()).collect();
    let n = matrix.n_samples();
    Ok((0..matrix.n_sources())
        .map(|s| {
            let column = matrix.column(s);
            let covered = column.iter().filter(|v| v.is_some()).count();
            let coverage = if n == 0 { 0.0 } else { covered as f64 / n as f64 };
            let covered_report = gold.and_then(|g| {
                let (preds, golds): (Vec<Option<usize>>, Vec<usize>) = column
                    .iter()
                    .zip(g)
                    .filter_map(|(p, g)| Some((Some(p.as_ref()?.index), g.as_ref()?.index)))
                    .unzip();
                evaluate_indices::<f64>(&preds, &golds, &names).ok()
            });
            SourceStats {
                source_id: matrix.source_ids[s].clone(),
                coverage,
                covered_macro_f1: covered_report.as_ref().map(|r| r.macro_f1),
                covered_report,
            }
        })
        .collect())
}

/// Source id → column index.
pub fn column_index(matrix: &LabelMatrix) -> HashMap<&str, usize> {
    matrix
        .source_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect()
}

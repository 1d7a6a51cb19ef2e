//! Language-model backend interface and its query/result types.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Worth retrying: timeouts, overload, dropped connections.
    Transient,
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} backend error: {message}")]
pub struct BackendError {
    pub kind: ErrorKind,
    pub message: String,
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Transient,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Permanent,
            message: message.into(),
        }
    }

    pub fn is_transient(&self) -> bool {
        self.kind == ErrorKind::Transient
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentQuery {
    pub premise: String,
    pub hypotheses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentResult {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFillQuery {
    pub text: String,
    pub mask_marker: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFillResult {
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub entailment: bool,
    pub mask_fill: bool,
}

/// Scores premise/hypothesis pairs and mask fills. Implementations must be
/// deterministic for fixed inputs within a session.
pub trait LmBackend: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Marker substituted for `{mask}` in cloze prompts.
    fn mask_marker(&self) -> &str;

    fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentResult, BackendError>;

    fn mask_fill(&self, query: &MaskFillQuery) -> Result<MaskFillResult, BackendError>;
}

pub(crate) fn check_entailment(
    query: &EntailmentQuery,
    result: &EntailmentResult,
) -> Result<(), BackendError> {
    if result.scores.len() != query.hypotheses.len() {
        return Err(BackendError::permanent(format!(
            "expected {} entailment scores, got {}",
            query.hypotheses.len(),
            result.scores.len()
        )));
    }
    if let Some(bad) = result
        .scores
        .iter()
        .find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s)))
    {
        return Err(BackendError::permanent(format!(
            "entailment score {bad} outside [0, 1]"
        )));
    }
    Ok(())
}

pub(crate) fn check_mask_fill(query: &MaskFillQuery, result: &MaskFillResult) -> Result<(), BackendError> {
    if result.log_probs.len() != query.candidates.len() {
        return Err(BackendError::permanent(format!(
            "expected {} log-probs, got {}",
            query.candidates.len(),
            result.log_probs.len()
        )));
    }
    if let Some(bad) = result.log_probs.iter().find(|s| !s.is_finite()) {
        return Err(BackendError::permanent(format!("non-finite log-prob {bad}")));
    }
    Ok(())
}

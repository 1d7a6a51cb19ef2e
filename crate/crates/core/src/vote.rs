//! Votes emitted by weak sources and the source trait itself.

use thiserror::Error;

use crate::corpus::{ClassLabel, Utterance};

/// One source's decision on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVote {
    pub source_id: String,
    pub label: Option<ClassLabel>,
    pub confidence: f64,
    /// Provenance note: error annotations, skipped ensemble members.
    pub note: Option<String>,
}

impl LabelVote {
    pub fn abstain(source_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            label: None,
            confidence: 0.0,
            note: None,
        }
    }

    /// A non-abstain vote. Confidence is clamped into (0, 1]; NaN becomes 1.
    pub fn new(source_id: impl Into<String>, label: ClassLabel, confidence: f64) -> Self {
        let confidence = if confidence.is_nan() {
            1.0
        } else {
            confidence.clamp(f64::MIN_POSITIVE, 1.0)
        };
        Self {
            source_id: source_id.into(),
            label: Some(label),
            confidence,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn is_abstain(&self) -> bool {
        self.label.is_none()
    }

    pub fn class_index(&self) -> Option<usize> {
        self.label.as_ref().map(|l| l.index)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("source {source_id}: {message}")]
pub struct SourceError {
    pub source_id: String,
    pub message: String,
    pub transient: bool,
}

/// Anything that can label an utterance or abstain.
pub trait WeakSource: Send + Sync {
    fn id(&self) -> &str;

    fn label(&self, utterance: &Utterance) -> Result<LabelVote, SourceError>;
}

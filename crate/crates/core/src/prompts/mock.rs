//! Deterministic keyword-table backend for tests and offline runs.
//!
//! The table maps a lowercase keyword to additive scores per verbalizer
//! token. Entailment of a hypothesis is the logistic of the summed scores
//! of premise keywords toward the verbalizers the hypothesis contains. The
//! mask-fill log-prob of a candidate is the summed score of the keywords
//! that precede the mask marker.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::{
    BackendError, Capabilities, EntailmentQuery, EntailmentResult, LmBackend, MaskFillQuery,
    MaskFillResult,
};
use crate::corpus::{normalize_text, read_structured, CorpusError};

pub const DEFAULT_MOCK_MASK: &str = "<MASK>";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    /// keyword → verbalizer → score
    #[serde(default)]
    pub keywords: BTreeMap<String, BTreeMap<String, f64>>,
    /// When set, mask-fill candidates outside it are rejected.
    #[serde(default)]
    pub vocabulary: Option<BTreeSet<String>>,
    #[serde(default)]
    pub mask_marker: Option<String>,
}

impl MockSpec {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        read_structured(path)
    }

    pub fn keyword(mut self, keyword: &str, verbalizer: &str, score: f64) -> Self {
        *self
            .keywords
            .entry(keyword.to_lowercase())
            .or_default()
            .entry(verbalizer.to_lowercase())
            .or_default() += score;
        self
    }
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    spec: MockSpec,
    marker: String,
}

pub fn mock_backend(spec: MockSpec) -> MockBackend {
    MockBackend::new(spec)
}

impl MockBackend {
    pub fn new(spec: MockSpec) -> Self {
        let marker = spec
            .mask_marker
            .clone()
            .unwrap_or_else(|| DEFAULT_MOCK_MASK.to_string());
        Self { spec, marker }
    }

    fn score_toward(&self, text: &str, verbalizers: &HashSet<String>) -> f64 {
        normalize_text(text)
            .tokens()
            .iter()
            .filter_map(|t| self.spec.keywords.get(t))
            .flat_map(|row| row.iter())
            .filter(|(v, _)| verbalizers.contains(v.as_str()))
            .map(|(_, s)| s)
            .sum()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LmBackend for MockBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            entailment: true,
            mask_fill: true,
        }
    }

    fn mask_marker(&self) -> &str {
        &self.marker
    }

    fn entail(&self, query: &EntailmentQuery) -> Result<EntailmentResult, BackendError> {
        let scores = query
            .hypotheses
            .iter()
            .map(|h| {
                let verbalizers: HashSet<String> =
                    normalize_text(h).tokens().iter().cloned().collect();
                logistic(self.score_toward(&query.premise, &verbalizers))
            })
            .collect();
        Ok(EntailmentResult { scores })
    }

    fn mask_fill(&self, query: &MaskFillQuery) -> Result<MaskFillResult, BackendError> {
        let Some(at) = query.text.find(&query.mask_marker) else {
            return Err(BackendError::permanent(format!(
                "mask marker {:?} not found in text",
                query.mask_marker
            )));
        };
        let context = &query.text[..at];
        let mut log_probs = Vec::with_capacity(query.candidates.len());
        for c in &query.candidates {
            let token = c.to_lowercase();
            if let Some(vocab) = &self.spec.vocabulary {
                if !vocab.contains(&token) {
                    return Err(BackendError::permanent(format!(
                        "verbalizer {c:?} not in vocabulary"
                    )));
                }
            }
            log_probs.push(self.score_toward(context, &HashSet::from([token])));
        }
        Ok(MaskFillResult { log_probs })
    }
}

//! Prompt-based weak sources over an abstract language-model backend.
//!
//! A [`PromptTemplate`] is a pattern with one `{mask}` slot (and optionally
//! a `{text}` slot) plus a single-token verbalizer per class. NLI-style use
//! substitutes each verbalizer into the pattern to form one hypothesis per
//! class; cloze-style use asks the backend for the log-probability of each
//! verbalizer at the mask.

pub mod backend;
pub mod mock;
pub mod remote;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    BackendError, Capabilities, EntailmentQuery, EntailmentResult, ErrorKind, LmBackend,
    MaskFillQuery, MaskFillResult,
};
pub use mock::{mock_backend, MockBackend, MockSpec};
pub use remote::{RemoteBackend, RemoteConfig};

use crate::corpus::{read_structured, ClassLabel, CorpusError, LabelSchema, Utterance};
use crate::vote::{LabelVote, SourceError, WeakSource};

pub const TEXT_SLOT: &str = "{text}";
pub const MASK_SLOT: &str = "{mask}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("template {id}: no demonstration for class {class:?}")]
    MissingDemo { id: String, class: String },
    #[error("template {id}: more than one demonstration for class {class:?}")]
    DuplicateDemo { id: String, class: String },
    #[error(transparent)]
    Io(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Nli,
    Cloze,
}

/// On-disk prompt description (TOML or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpecFile {
    pub id: String,
    pub style: PromptStyle,
    pub pattern: String,
    /// class name → verbalizer token
    pub verbalizers: BTreeMap<String, String>,
    /// class name → demonstration text
    #[serde(default)]
    pub demos: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub separator: Option<String>,
}

impl PromptSpecFile {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        read_structured(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: String,
    pub style: PromptStyle,
    pub pattern: String,
    /// One verbalizer per class, in schema order.
    pub verbalizers: Vec<(ClassLabel, String)>,
    /// Joins the query segment and the demonstrations in cloze prompts.
    pub separator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub class: ClassLabel,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(
        id: impl Into<String>,
        style: PromptStyle,
        pattern: impl Into<String>,
        verbalizers: &BTreeMap<String, String>,
        schema: &LabelSchema,
    ) -> Result<Self, PromptError> {
        let id = id.into();
        let pattern = pattern.into();
        let invalid = |reason: String| PromptError::Invalid {
            id: id.clone(),
            reason,
        };
        let masks = pattern.matches(MASK_SLOT).count();
        if masks != 1 {
            return Err(invalid(format!("pattern needs exactly one {MASK_SLOT}, found {masks}")));
        }
        if pattern.matches(TEXT_SLOT).count() > 1 {
            return Err(invalid(format!("pattern has more than one {TEXT_SLOT}")));
        }
        for name in verbalizers.keys() {
            if schema.class(name).is_none() {
                return Err(invalid(format!("verbalizer for unknown class {name:?}")));
            }
        }
        let mut seen = HashSet::new();
        let mut ordered = Vec::with_capacity(schema.len());
        for class in schema.classes() {
            let token = verbalizers
                .get(&class.name)
                .ok_or_else(|| invalid(format!("no verbalizer for class {:?}", class.name)))?;
            let token = token.trim();
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(invalid(format!("verbalizer {token:?} is not a single token")));
            }
            if !seen.insert(token.to_string()) {
                return Err(invalid(format!("verbalizer {token:?} used for two classes")));
            }
            ordered.push((class.clone(), token.to_string()));
        }
        Ok(Self {
            id,
            style,
            pattern,
            verbalizers: ordered,
            separator: " ".into(),
        })
    }

    pub fn from_spec(spec: &PromptSpecFile, schema: &LabelSchema) -> Result<Self, PromptError> {
        let mut t = Self::new(spec.id.clone(), spec.style, spec.pattern.clone(), &spec.verbalizers, schema)?;
        if let Some(sep) = &spec.separator {
            t.separator = sep.clone();
        }
        Ok(t)
    }

    /// Same pattern, different verbalizers: how task-agnostic prompts are
    /// reused across tasks.
    pub fn with_verbalizers(
        &self,
        verbalizers: &BTreeMap<String, String>,
        schema: &LabelSchema,
    ) -> Result<Self, PromptError> {
        let mut t = Self::new(self.id.clone(), self.style, self.pattern.clone(), verbalizers, schema)?;
        t.separator = self.separator.clone();
        Ok(t)
    }

    pub fn verbalizer_tokens(&self) -> Vec<String> {
        self.verbalizers.iter().map(|(_, v)| v.clone()).collect()
    }
}

/// Resolves `demos` (class name → text) into one demonstration per class.
pub fn resolve_demos(
    template_id: &str,
    demos: &BTreeMap<String, String>,
    schema: &LabelSchema,
) -> Result<Vec<Demonstration>, PromptError> {
    demos
        .iter()
        .map(|(name, text)| {
            let class = schema.class(name).cloned().ok_or_else(|| PromptError::Invalid {
                id: template_id.to_string(),
                reason: format!("demonstration for unknown class {name:?}"),
            })?;
            Ok(Demonstration {
                class,
                text: text.clone(),
            })
        })
        .collect()
}

fn squash_spaces(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One hypothesis per class in schema order: the verbalizer fills the mask
/// and the text slot is dropped, since the premise carries the utterance.
pub fn render_nli_hypotheses(template: &PromptTemplate) -> Vec<(ClassLabel, String)> {
    template
        .verbalizers
        .iter()
        .map(|(class, verbalizer)| {
            let h = template.pattern.replace(TEXT_SLOT, "").replace(MASK_SLOT, verbalizer);
            (class.clone(), squash_spaces(&h))
        })
        .collect()
}

fn strip_marker(text: &str, marker: &str) -> String {
    let mut out = text.to_string();
    while !marker.is_empty() && out.contains(marker) {
        out = out.replace(marker, "");
    }
    out
}

fn fill(pattern: &str, text: &str, mask: &str) -> String {
    if pattern.contains(TEXT_SLOT) {
        pattern.replace(TEXT_SLOT, text).replace(MASK_SLOT, mask)
    } else {
        format!("{text} {}", pattern.replace(MASK_SLOT, mask))
    }
}

/// Builds the cloze query: the utterance with the mask marker in place,
/// then one filled-in demonstration per class in schema order. Occurrences
/// of the marker inside utterance or demonstration text are removed so the
/// result holds exactly one marker.
pub fn render_cloze(
    template: &PromptTemplate,
    utterance: &Utterance,
    demos: &[Demonstration],
    schema: &LabelSchema,
    mask_marker: &str,
) -> Result<String, PromptError> {
    let invalid = |reason: String| PromptError::Invalid {
        id: template.id.clone(),
        reason,
    };
    if mask_marker.is_empty() {
        return Err(invalid("empty mask marker".into()));
    }
    if template.pattern.contains(mask_marker) {
        return Err(invalid(format!("pattern already contains mask marker {mask_marker:?}")));
    }
    let mut ordered = Vec::new();
    if !demos.is_empty() {
        for d in demos {
            if demos.iter().filter(|o| o.class == d.class).count() > 1 {
                return Err(PromptError::DuplicateDemo {
                    id: template.id.clone(),
                    class: d.class.name.clone(),
                });
            }
        }
        for (class, verbalizer) in &template.verbalizers {
            let demo = demos
                .iter()
                .find(|d| &d.class == class)
                .ok_or_else(|| PromptError::MissingDemo {
                    id: template.id.clone(),
                    class: class.name.clone(),
                })?;
            if !schema.contains(&demo.class) {
                return Err(invalid(format!("demonstration class {} not in schema", demo.class)));
            }
            ordered.push(fill(&template.pattern, &strip_marker(&demo.text, mask_marker), verbalizer));
        }
    }
    let mut out = fill(&template.pattern, &strip_marker(&utterance.text, mask_marker), mask_marker);
    for segment in ordered {
        out.push_str(&template.separator);
        out.push_str(&segment);
    }
    Ok(out)
}

fn permanent(source_id: &str, message: String) -> SourceError {
    SourceError {
        source_id: source_id.to_string(),
        message,
        transient: false,
    }
}

fn from_backend(source_id: &str, e: BackendError) -> SourceError {
    SourceError {
        source_id: source_id.to_string(),
        transient: e.is_transient(),
        message: e.message,
    }
}

/// Index of the largest entry; the earliest wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Entailment scores renormalized to a distribution over classes.
pub fn nli_distribution(
    utterance: &Utterance,
    template: &PromptTemplate,
    backend: &dyn LmBackend,
) -> Result<Vec<f64>, SourceError> {
    if !backend.capabilities().entailment {
        return Err(permanent(&template.id, "backend does not support entailment".into()));
    }
    let hypotheses = render_nli_hypotheses(template);
    let query = EntailmentQuery {
        premise: utterance.text.clone(),
        hypotheses: hypotheses.into_iter().map(|(_, h)| h).collect(),
    };
    let result = backend.entail(&query).map_err(|e| from_backend(&template.id, e))?;
    backend::check_entailment(&query, &result).map_err(|e| from_backend(&template.id, e))?;
    let total: f64 = result.scores.iter().sum();
    let n = result.scores.len() as f64;
    Ok(if total > 0.0 {
        result.scores.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / n; result.scores.len()]
    })
}

/// Softmax of the verbalizer log-probabilities at the mask.
pub fn cloze_distribution(
    utterance: &Utterance,
    template: &PromptTemplate,
    demos: &[Demonstration],
    schema: &LabelSchema,
    backend: &dyn LmBackend,
) -> Result<Vec<f64>, SourceError> {
    if !backend.capabilities().mask_fill {
        return Err(permanent(&template.id, "backend does not support mask fill".into()));
    }
    let marker = backend.mask_marker().to_string();
    let text = render_cloze(template, utterance, demos, schema, &marker)
        .map_err(|e| permanent(&template.id, e.to_string()))?;
    let query = MaskFillQuery {
        text,
        mask_marker: marker,
        candidates: template.verbalizer_tokens(),
    };
    let result = backend.mask_fill(&query).map_err(|e| from_backend(&template.id, e))?;
    backend::check_mask_fill(&query, &result).map_err(|e| from_backend(&template.id, e))?;
    Ok(softmax(&result.log_probs))
}

fn vote_from_distribution(source_id: &str, template: &PromptTemplate, dist: &[f64]) -> LabelVote {
    let best = argmax(dist);
    LabelVote::new(source_id, template.verbalizers[best].0.clone(), dist[best])
}

pub fn nli_label(
    utterance: &Utterance,
    template: &PromptTemplate,
    backend: &dyn LmBackend,
) -> Result<LabelVote, SourceError> {
    let dist = nli_distribution(utterance, template, backend)?;
    Ok(vote_from_distribution(&template.id, template, &dist))
}

pub fn cloze_label(
    utterance: &Utterance,
    template: &PromptTemplate,
    demos: &[Demonstration],
    schema: &LabelSchema,
    backend: &dyn LmBackend,
) -> Result<LabelVote, SourceError> {
    let dist = cloze_distribution(utterance, template, demos, schema, backend)?;
    Ok(vote_from_distribution(&template.id, template, &dist))
}

/// A template with its demonstrations (empty for NLI or zero-demo cloze).
#[derive(Debug, Clone, PartialEq)]
pub struct PromptMember {
    pub template: PromptTemplate,
    pub demos: Vec<Demonstration>,
}

impl PromptMember {
    pub fn from_spec(spec: &PromptSpecFile, schema: &LabelSchema) -> Result<Self, PromptError> {
        let template = PromptTemplate::from_spec(spec, schema)?;
        let demos = match &spec.demos {
            Some(d) => resolve_demos(&spec.id, d, schema)?,
            None => Vec::new(),
        };
        Ok(Self { template, demos })
    }

    pub fn distribution(
        &self,
        utterance: &Utterance,
        schema: &LabelSchema,
        backend: &dyn LmBackend,
    ) -> Result<Vec<f64>, SourceError> {
        match self.template.style {
            PromptStyle::Nli => nli_distribution(utterance, &self.template, backend),
            PromptStyle::Cloze => cloze_distribution(utterance, &self.template, &self.demos, schema, backend),
        }
    }
}

/// Averages the per-template class distributions. Transient failures are
/// skipped when at least one member answers; a permanent failure aborts.
pub fn ensemble_prompt_label(
    source_id: &str,
    utterance: &Utterance,
    members: &[PromptMember],
    schema: &LabelSchema,
    backend: &dyn LmBackend,
) -> Result<LabelVote, SourceError> {
    if members.is_empty() {
        return Err(permanent(source_id, "empty prompt ensemble".into()));
    }
    let mut sum = vec![0.0; schema.len()];
    let mut answered = 0usize;
    let mut skipped = Vec::new();
    for m in members {
        match m.distribution(utterance, schema, backend) {
            Ok(dist) => {
                for (s, p) in sum.iter_mut().zip(&dist) {
                    *s += p;
                }
                answered += 1;
            }
            Err(e) if e.transient => skipped.push(format!("{}: {}", m.template.id, e.message)),
            Err(e) => {
                return Err(SourceError {
                    source_id: source_id.to_string(),
                    message: format!("{}: {}", m.template.id, e.message),
                    transient: false,
                })
            }
        }
    }
    if answered == 0 {
        return Ok(LabelVote::abstain(source_id)
            .with_note(format!("all prompts failed transiently: {}", skipped.join("; "))));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / answered as f64).collect();
    let best = argmax(&mean);
    let class = schema.get(best).expect("distribution matches schema").clone();
    let vote = LabelVote::new(source_id, class, mean[best]);
    Ok(if skipped.is_empty() {
        vote
    } else {
        vote.with_note(format!("skipped transient: {}", skipped.join("; ")))
    })
}

/// A weak source backed by one or more prompts.
#[derive(Clone)]
pub struct PromptSource {
    pub id: String,
    pub members: Vec<PromptMember>,
    pub schema: LabelSchema,
    pub backend: Arc<dyn LmBackend>,
}

impl std::fmt::Debug for PromptSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PromptSource")
            .field("id", &self.id)
            .field("members", &self.members)
            .finish()
    }
}

impl WeakSource for PromptSource {
    fn id(&self) -> &str {
        &self.id
    }

    fn label(&self, utterance: &Utterance) -> Result<LabelVote, SourceError> {
        let mut vote = if let [single] = self.members.as_slice() {
            let dist = single
                .distribution(utterance, &self.schema, self.backend.as_ref())
                .map_err(|e| SourceError {
                    source_id: self.id.clone(),
                    ..e
                })?;
            vote_from_distribution(&self.id, &single.template, &dist)
        } else {
            ensemble_prompt_label(&self.id, utterance, &self.members, &self.schema, self.backend.as_ref())?
        };
        vote.source_id = self.id.clone();
        Ok(vote)
    }
}

//! Datasets, label schemas, lexicons and text normalization.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate utterance id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: unknown label {label:?} (schema classes: {known})")]
    UnknownLabel {
        line: usize,
        label: String,
        known: String,
    },
    #[error("line {line}: empty text for utterance {id:?}")]
    EmptyText { line: usize, id: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("line {line}: {reason}")]
    Lexicon { line: usize, reason: String },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel {
    pub name: String,
    pub index: usize,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ordered set of classes for one task. The order is canonical everywhere:
/// distributions, demonstrations and confusion matrices all follow it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSchema {
    task_name: String,
    classes: Vec<ClassLabel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub task_name: String,
    pub classes: Vec<String>,
}

impl LabelSchema {
    pub fn new<S: AsRef<str>>(task_name: impl Into<String>, names: &[S]) -> Result<Self> {
        if names.len() < 2 {
            return Err(CorpusError::Schema(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        let mut classes = Vec::with_capacity(names.len());
        for (index, name) in names.iter().enumerate() {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(CorpusError::Schema("empty class name".into()));
            }
            if !seen.insert(name.to_string()) {
                return Err(CorpusError::Schema(format!("duplicate class {name:?}")));
            }
            classes.push(ClassLabel {
                name: name.to_string(),
                index,
            });
        }
        Ok(Self {
            task_name: task_name.into(),
            classes,
        })
    }

    pub fn from_file(file: &SchemaFile) -> Result<Self> {
        Self::new(file.task_name.clone(), &file.classes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: SchemaFile = read_structured(path)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> SchemaFile {
        SchemaFile {
            task_name: self.task_name.clone(),
            classes: self.classes.iter().map(|c| c.name.clone()).collect(),
        }
    }

    pub fn task_name(&self) -> &str {
        &self.task_name
    }

    pub fn classes(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class(&self, name: &str) -> Option<&ClassLabel> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn get(&self, index: usize) -> Option<&ClassLabel> {
        self.classes.get(index)
    }

    pub fn contains(&self, label: &ClassLabel) -> bool {
        self.classes.get(label.index) == Some(label)
    }

    fn known_names(&self) -> String {
        self.classes
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub gold: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: LabelSchema,
    pub utterances: Vec<Utterance>,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    id: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<std::borrow::Cow<'a, str>>,
}

impl Dataset {
    /// Parses line-delimited JSON records. Blank lines are skipped.
    pub fn parse(input: &str, schema: LabelSchema) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut utterances = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            if rec.text.trim().is_empty() {
                return Err(CorpusError::EmptyText {
                    line,
                    id: rec.id.into_owned(),
                });
            }
            if !seen.insert(rec.id.to_string()) {
                return Err(CorpusError::DuplicateId {
                    line,
                    id: rec.id.into_owned(),
                });
            }
            let gold = match rec.gold {
                None => None,
                Some(name) => Some(
                    schema
                        .class(&name)
                        .cloned()
                        .ok_or_else(|| CorpusError::UnknownLabel {
                            line,
                            label: name.to_string(),
                            known: schema.known_names(),
                        })?,
                ),
            };
            utterances.push(Utterance {
                id: rec.id.into_owned(),
                text: rec.text.into_owned(),
                gold,
            });
        }
        Ok(Self { schema, utterances })
    }

    /// Canonical serialization: one compact JSON object per line, fields in
    /// `id`, `text`, `gold` order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            let rec = Record {
                id: u.id.as_str().into(),
                text: u.text.as_str().into(),
                gold: u.gold.as_ref().map(|g| g.name.as_str().into()),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.utterances.iter().map(|u| u.id.clone()).collect()
    }

    pub fn gold(&self) -> Vec<Option<ClassLabel>> {
        self.utterances.iter().map(|u| u.gold.clone()).collect()
    }
}

pub fn load_dataset(path: &Path, schema: LabelSchema) -> Result<Dataset> {
    Dataset::parse(&read_to_string(path)?, schema)
}

/// Lowercases, splits on whitespace and strips surrounding punctuation from
/// each token. Apostrophes and hyphens inside a word survive.
pub fn normalize_text(text: &str) -> TokenSequence {
    let tokens = text
        .split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_string())
            }
        })
        .collect();
    TokenSequence { tokens }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    /// Builds a sequence from already-normalized tokens; each token is run
    /// through `normalize_text` so the invariants hold.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let tokens = tokens
            .iter()
            .flat_map(|t| normalize_text(t.as_ref()).tokens)
            .collect();
        Self { tokens }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconWarning {
    pub line: usize,
    pub token: String,
    pub previous: f64,
    pub score: f64,
}

impl fmt::Display for LexiconWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: duplicate token {:?} overrides {} with {}",
            self.line, self.token, self.previous, self.score
        )
    }
}

impl Lexicon {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        Self {
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.as_ref().to_lowercase(), v))
                .collect(),
        }
    }

    /// Parses `token<TAB>score` lines. Later duplicates win and are reported.
    pub fn parse(input: &str) -> Result<(Self, Vec<LexiconWarning>)> {
        let mut entries = HashMap::new();
        let mut warnings = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let (token, score) = raw.split_once('\t').ok_or_else(|| CorpusError::Lexicon {
                line,
                reason: "expected token<TAB>score".into(),
            })?;
            let token = token.trim().to_lowercase();
            if token.is_empty() {
                return Err(CorpusError::Lexicon {
                    line,
                    reason: "empty token".into(),
                });
            }
            if token.chars().any(char::is_whitespace) {
                return Err(CorpusError::Lexicon {
                    line,
                    reason: format!("token {token:?} contains whitespace"),
                });
            }
            let score: f64 = score.trim().parse().map_err(|_| CorpusError::Lexicon {
                line,
                reason: format!("non-numeric score {:?}", score.trim()),
            })?;
            if !score.is_finite() {
                return Err(CorpusError::Lexicon {
                    line,
                    reason: format!("non-finite score {score}"),
                });
            }
            if let Some(previous) = entries.insert(token.clone(), score) {
                warnings.push(LexiconWarning {
                    line,
                    token,
                    previous,
                    score,
                });
            }
        }
        Ok((Self { entries }, warnings))
    }

    pub fn score(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Merges `other` on top of `self`; `other` wins on shared tokens.
    pub fn layer(&mut self, other: Lexicon) {
        self.entries.extend(other.entries);
    }

    pub fn negated(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), -v)).collect(),
        }
    }
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    let (lexicon, warnings) = Lexicon::parse(&read_to_string(path)?)?;
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(lexicon)
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a TOML or JSON document, chosen by file extension (TOML otherwise).
pub fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| CorpusError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    } else {
        toml::from_str(&text).map_err(|e| CorpusError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

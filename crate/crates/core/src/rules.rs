//! Rule-based weak sources: lexicon polarity and disfluency detectors.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_lexicon, normalize_text, read_to_string, ClassLabel, CorpusError, LabelSchema, Lexicon,
    TokenSequence, Utterance,
};
use crate::soundex::{raw_code, soundex};
use crate::vote::{LabelVote, SourceError, WeakSource};

pub const DEFAULT_FILLERS: &str = include_str!("../data/fillers.txt");

/// Which schema classes the polarity rules vote for.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityBinding {
    pub positive: ClassLabel,
    pub negative: ClassLabel,
}

/// Which schema classes the disfluency rules vote for.
#[derive(Debug, Clone, PartialEq)]
pub struct DisfluencyBinding {
    pub fluent: ClassLabel,
    pub disfluent: ClassLabel,
}

fn bind(schema: &LabelSchema, name: &str) -> Result<ClassLabel, CorpusError> {
    schema
        .class(name)
        .cloned()
        .ok_or_else(|| CorpusError::Schema(format!("bound class {name:?} not in schema")))
}

impl PolarityBinding {
    pub fn resolve(schema: &LabelSchema, positive: &str, negative: &str) -> Result<Self, CorpusError> {
        Ok(Self {
            positive: bind(schema, positive)?,
            negative: bind(schema, negative)?,
        })
    }
}

impl DisfluencyBinding {
    pub fn resolve(schema: &LabelSchema, fluent: &str, disfluent: &str) -> Result<Self, CorpusError> {
        Ok(Self {
            fluent: bind(schema, fluent)?,
            disfluent: bind(schema, disfluent)?,
        })
    }
}

/// Confidence constants for the disfluency rules. They only matter for
/// soft aggregation; majority voting ignores them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleConfidences {
    pub hard: f64,
    pub soundex: f64,
    pub fluent_default: f64,
}

impl Default for RuleConfidences {
    fn default() -> Self {
        Self {
            hard: 1.0,
            soundex: 0.8,
            fluent_default: 0.6,
        }
    }
}

/// Filler words and multi-word filler phrases, each stored normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FillerSet {
    phrases: Vec<Vec<String>>,
}

impl FillerSet {
    /// One token or phrase per line; blank lines and `#` comments skipped.
    pub fn parse(input: &str) -> Self {
        let mut phrases: Vec<Vec<String>> = input
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| normalize_text(l).tokens().to_vec())
            .filter(|p| !p.is_empty())
            .collect();
        phrases.sort();
        phrases.dedup();
        Self { phrases }
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Ok(Self::parse(&read_to_string(path)?))
    }

    pub fn from_phrases<S: AsRef<str>>(phrases: &[S]) -> Self {
        Self::parse(
            &phrases
                .iter()
                .map(AsRef::as_ref)
                .collect::<Vec<_>>()
                .join("\n"),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    fn occurs_in(&self, tokens: &[String]) -> bool {
        self.phrases
            .iter()
            .any(|p| tokens.windows(p.len()).any(|w| w == p.as_slice()))
    }
}

impl Default for FillerSet {
    fn default() -> Self {
        Self::parse(DEFAULT_FILLERS)
    }
}

/// Sums lexicon scores over the tokens; votes by the sign of the sum once it
/// clears `theta`. Confidence is `min(1, |s| / (theta + 3))`.
pub fn lexicon_label(
    source_id: &str,
    tokens: &TokenSequence,
    lexicon: &Lexicon,
    theta: f64,
    binding: &PolarityBinding,
) -> LabelVote {
    let s: f64 = tokens.tokens().iter().filter_map(|t| lexicon.score(t)).sum();
    let confidence = (s.abs() / (theta + 3.0)).min(1.0);
    if s > theta {
        LabelVote::new(source_id, binding.positive.clone(), confidence)
    } else if s < -theta {
        LabelVote::new(source_id, binding.negative.clone(), confidence)
    } else {
        LabelVote::abstain(source_id)
    }
}

pub fn filler_label(
    source_id: &str,
    tokens: &TokenSequence,
    fillers: &FillerSet,
    binding: &DisfluencyBinding,
    confidence: f64,
) -> LabelVote {
    if fillers.occurs_in(tokens.tokens()) {
        LabelVote::new(source_id, binding.disfluent.clone(), confidence)
    } else {
        LabelVote::abstain(source_id)
    }
}

fn has_adjacent_repeat(tokens: &[String], n_max: usize) -> bool {
    (1..=n_max).any(|n| {
        tokens.len() >= 2 * n
            && (0..=tokens.len() - 2 * n).any(|i| tokens[i..i + n] == tokens[i + n..i + 2 * n])
    })
}

/// Fires when some n-gram with `1 <= n <= n_max` is immediately repeated.
pub fn repetition_label(
    source_id: &str,
    tokens: &TokenSequence,
    n_max: usize,
    binding: &DisfluencyBinding,
    confidence: f64,
) -> LabelVote {
    if has_adjacent_repeat(tokens.tokens(), n_max) {
        LabelVote::new(source_id, binding.disfluent.clone(), confidence)
    } else {
        LabelVote::abstain(source_id)
    }
}

// A fragment followed by the word it restarts: same first letter and the
// fragment's digit string is a nonempty proper prefix of the word's.
fn is_restart(first: &(u8, Vec<u8>), second: &(u8, Vec<u8>)) -> bool {
    first.0 == second.0
        && !first.1.is_empty()
        && first.1.len() < second.1.len()
        && second.1.starts_with(&first.1)
}

fn has_soundex_collision(tokens: &[String]) -> bool {
    let coded: Vec<(&str, (u8, Vec<u8>))> = tokens
        .iter()
        .filter_map(|t| raw_code(t).ok().map(|c| (t.as_str(), c)))
        .collect();
    coded.windows(2).any(|pair| {
        let (a, ca) = &pair[0];
        let (b, cb) = &pair[1];
        a != b && (soundex(a) == soundex(b) || is_restart(ca, cb))
    })
}

/// Adjacent, non-identical tokens that sound alike (equal Soundex codes, or
/// a truncated fragment followed by its completion such as "wan want").
pub fn soundex_repeat_label(
    source_id: &str,
    tokens: &TokenSequence,
    binding: &DisfluencyBinding,
    confidence: f64,
) -> LabelVote {
    if has_soundex_collision(tokens.tokens()) {
        LabelVote::new(source_id, binding.disfluent.clone(), confidence)
    } else {
        LabelVote::abstain(source_id)
    }
}

/// Votes fluent when none of the disfluency detectors fire on an utterance
/// of at least three tokens.
pub fn fluent_default_label(
    source_id: &str,
    tokens: &TokenSequence,
    fillers: &FillerSet,
    n_max: usize,
    binding: &DisfluencyBinding,
    confidence: f64,
) -> LabelVote {
    let t = tokens.tokens();
    let quiet = !fillers.occurs_in(t) && !has_adjacent_repeat(t, n_max) && !has_soundex_collision(t);
    if quiet && t.len() >= 3 {
        LabelVote::new(source_id, binding.fluent.clone(), confidence)
    } else {
        LabelVote::abstain(source_id)
    }
}

/// A configured rule, ready to run over utterances.
#[derive(Debug, Clone)]
pub enum RuleSource {
    Lexicon {
        id: String,
        lexicon: Lexicon,
        theta: f64,
        binding: PolarityBinding,
    },
    Filler {
        id: String,
        fillers: FillerSet,
        binding: DisfluencyBinding,
        confidence: f64,
    },
    Repetition {
        id: String,
        n_max: usize,
        binding: DisfluencyBinding,
        confidence: f64,
    },
    Soundex {
        id: String,
        binding: DisfluencyBinding,
        confidence: f64,
    },
    FluentDefault {
        id: String,
        fillers: FillerSet,
        n_max: usize,
        binding: DisfluencyBinding,
        confidence: f64,
    },
}

impl RuleSource {
    pub fn label_tokens(&self, tokens: &TokenSequence) -> LabelVote {
        match self {
            RuleSource::Lexicon {
                id,
                lexicon,
                theta,
                binding,
            } => lexicon_label(id, tokens, lexicon, *theta, binding),
            RuleSource::Filler {
                id,
                fillers,
                binding,
                confidence,
            } => filler_label(id, tokens, fillers, binding, *confidence),
            RuleSource::Repetition {
                id,
                n_max,
                binding,
                confidence,
            } => repetition_label(id, tokens, *n_max, binding, *confidence),
            RuleSource::Soundex {
                id,
                binding,
                confidence,
            } => soundex_repeat_label(id, tokens, binding, *confidence),
            RuleSource::FluentDefault {
                id,
                fillers,
                n_max,
                binding,
                confidence,
            } => fluent_default_label(id, tokens, fillers, *n_max, binding, *confidence),
        }
    }
}

impl WeakSource for RuleSource {
    fn id(&self) -> &str {
        match self {
            RuleSource::Lexicon { id, .. }
            | RuleSource::Filler { id, .. }
            | RuleSource::Repetition { id, .. }
            | RuleSource::Soundex { id, .. }
            | RuleSource::FluentDefault { id, .. } => id,
        }
    }

    fn label(&self, utterance: &Utterance) -> Result<LabelVote, SourceError> {
        Ok(self.label_tokens(&normalize_text(&utterance.text)))
    }
}

/// Votes computed elsewhere (e.g. VADER), keyed by utterance id. Unknown ids
/// abstain.
#[derive(Debug, Clone)]
pub struct PrecomputedVotes {
    id: String,
    votes: HashMap<String, (Option<ClassLabel>, f64)>,
}

impl PrecomputedVotes {
    /// Parses `id<TAB>label-or-ABSTAIN<TAB>confidence` lines.
    pub fn parse(id: impl Into<String>, input: &str, schema: &LabelSchema) -> Result<Self, CorpusError> {
        let mut votes = HashMap::new();
        for (i, raw) in input.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let [sample, label, conf] = fields.as_slice() else {
                return Err(CorpusError::Malformed {
                    line,
                    reason: "expected id<TAB>label<TAB>confidence".into(),
                });
            };
            let confidence: f64 = conf.trim().parse().map_err(|_| CorpusError::Malformed {
                line,
                reason: format!("bad confidence {conf:?}"),
            })?;
            let label = label.trim();
            let entry = if label == "ABSTAIN" {
                (None, 0.0)
            } else {
                if !(confidence > 0.0 && confidence <= 1.0) {
                    return Err(CorpusError::Malformed {
                        line,
                        reason: format!("confidence {confidence} outside (0, 1]"),
                    });
                }
                let class = schema.class(label).cloned().ok_or_else(|| CorpusError::UnknownLabel {
                    line,
                    label: label.to_string(),
                    known: schema
                        .classes()
                        .iter()
                        .map(|c| c.name.clone())
                        .collect::<Vec<_>>()
                        .join(", "),
                })?;
                (Some(class), confidence)
            };
            votes.insert(sample.trim().to_string(), entry);
        }
        Ok(Self { id: id.into(), votes })
    }

    pub fn load(id: impl Into<String>, path: &Path, schema: &LabelSchema) -> Result<Self, CorpusError> {
        Self::parse(id, &read_to_string(path)?, schema)
    }
}

impl WeakSource for PrecomputedVotes {
    fn id(&self) -> &str {
        &self.id
    }

    fn label(&self, utterance: &Utterance) -> Result<LabelVote, SourceError> {
        Ok(match self.votes.get(&utterance.id) {
            Some((Some(class), conf)) => LabelVote::new(&self.id, class.clone(), *conf),
            _ => LabelVote::abstain(&self.id),
        })
    }
}

/// Serializable description of one rule source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleSourceConfig {
    Lexicon {
        id: String,
        /// Layered in order; later files override earlier ones.
        paths: Vec<std::path::PathBuf>,
        #[serde(default)]
        theta: f64,
        positive: String,
        negative: String,
    },
    Filler {
        id: String,
        #[serde(default)]
        fillers: Option<std::path::PathBuf>,
        fluent: String,
        disfluent: String,
        #[serde(default)]
        confidences: RuleConfidences,
    },
    Repetition {
        id: String,
        #[serde(default = "default_n_max")]
        n_max: usize,
        fluent: String,
        disfluent: String,
        #[serde(default)]
        confidences: RuleConfidences,
    },
    Soundex {
        id: String,
        fluent: String,
        disfluent: String,
        #[serde(default)]
        confidences: RuleConfidences,
    },
    FluentDefault {
        id: String,
        #[serde(default)]
        fillers: Option<std::path::PathBuf>,
        #[serde(default = "default_n_max")]
        n_max: usize,
        fluent: String,
        disfluent: String,
        #[serde(default)]
        confidences: RuleConfidences,
    },
}

fn default_n_max() -> usize {
    3
}

impl RuleSourceConfig {
    pub fn id(&self) -> &str {
        match self {
            RuleSourceConfig::Lexicon { id, .. }
            | RuleSourceConfig::Filler { id, .. }
            | RuleSourceConfig::Repetition { id, .. }
            | RuleSourceConfig::Soundex { id, .. }
            | RuleSourceConfig::FluentDefault { id, .. } => id,
        }
    }

    /// Files this rule reads.
    pub fn referenced_paths(&self) -> Vec<&Path> {
        match self {
            RuleSourceConfig::Lexicon { paths, .. } => paths.iter().map(|p| p.as_path()).collect(),
            RuleSourceConfig::Filler { fillers, .. } | RuleSourceConfig::FluentDefault { fillers, .. } => {
                fillers.iter().map(|p| p.as_path()).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Rebases relative file paths onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut std::path::PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            RuleSourceConfig::Lexicon { paths, .. } => paths.iter_mut().for_each(fix),
            RuleSourceConfig::Filler { fillers, .. } | RuleSourceConfig::FluentDefault { fillers, .. } => {
                fillers.iter_mut().for_each(fix)
            }
            _ => {}
        }
    }

    pub fn build(&self, schema: &LabelSchema) -> Result<RuleSource, CorpusError> {
        let fillers = |path: &Option<std::path::PathBuf>| -> Result<FillerSet, CorpusError> {
            let set = match path {
                Some(p) => FillerSet::load(p)?,
                None => FillerSet::default(),
            };
            if set.is_empty() {
                return Err(CorpusError::Schema("filler set is empty".into()));
            }
            Ok(set)
        };
        let check_n = |n_max: usize| {
            if n_max == 0 {
                Err(CorpusError::Schema("n_max must be at least 1".into()))
            } else {
                Ok(n_max)
            }
        };
        Ok(match self {
            RuleSourceConfig::Lexicon {
                id,
                paths,
                theta,
                positive,
                negative,
            } => {
                if !(*theta >= 0.0 && theta.is_finite()) {
                    return Err(CorpusError::Schema(format!("theta must be >= 0, got {theta}")));
                }
                let mut lexicon = Lexicon::default();
                for p in paths {
                    lexicon.layer(load_lexicon(p)?);
                }
                RuleSource::Lexicon {
                    id: id.clone(),
                    lexicon,
                    theta: *theta,
                    binding: PolarityBinding::resolve(schema, positive, negative)?,
                }
            }
            RuleSourceConfig::Filler {
                id,
                fillers: path,
                fluent,
                disfluent,
                confidences,
            } => RuleSource::Filler {
                id: id.clone(),
                fillers: fillers(path)?,
                binding: DisfluencyBinding::resolve(schema, fluent, disfluent)?,
                confidence: confidences.hard,
            },
            RuleSourceConfig::Repetition {
                id,
                n_max,
                fluent,
                disfluent,
                confidences,
            } => RuleSource::Repetition {
                id: id.clone(),
                n_max: check_n(*n_max)?,
                binding: DisfluencyBinding::resolve(schema, fluent, disfluent)?,
                confidence: confidences.hard,
            },
            RuleSourceConfig::Soundex {
                id,
                fluent,
                disfluent,
                confidences,
            } => RuleSource::Soundex {
                id: id.clone(),
                binding: DisfluencyBinding::resolve(schema, fluent, disfluent)?,
                confidence: confidences.soundex,
            },
            RuleSourceConfig::FluentDefault {
                id,
                fillers: path,
                n_max,
                fluent,
                disfluent,
                confidences,
            } => RuleSource::FluentDefault {
                id: id.clone(),
                fillers: fillers(path)?,
                n_max: check_n(*n_max)?,
                binding: DisfluencyBinding::resolve(schema, fluent, disfluent)?,
                confidence: confidences.fluent_default,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(words)
    }

    fn polarity() -> PolarityBinding {
        let s = LabelSchema::new("sentiment", &["positive", "negative"]).unwrap();
        PolarityBinding::resolve(&s, "positive", "negative").unwrap()
    }

    fn disfluency() -> DisfluencyBinding {
        let s = LabelSchema::new("disfluency", &["fluent", "disfluent"]).unwrap();
        DisfluencyBinding::resolve(&s, "fluent", "disfluent").unwrap()
    }

    #[test]
    fn lexicon_examples() {
        let b = polarity();
        let lex = Lexicon::from_entries([("great", 3.0)]);
        let v = lexicon_label("lex", &toks(&["great", "movie"]), &lex, 0.0, &b);
        assert_eq!(v.label.unwrap().name, "positive");
        assert_eq!(v.confidence, 1.0);

        assert!(lexicon_label("lex", &toks(&["the", "a"]), &lex, 0.0, &b).is_abstain());

        let lex = Lexicon::from_entries([("good", 2.0), ("bad", -3.0)]);
        let v = lexicon_label("lex", &toks(&["good", "not", "bad"]), &lex, 0.0, &b);
        assert_eq!(v.label.unwrap().name, "negative");
        assert_eq!(v.confidence, 1.0 / 3.0);
    }

    #[test]
    fn lexicon_threshold_dead_zone() {
        let b = polarity();
        let lex = Lexicon::from_entries([("ok", 1.0)]);
        assert!(lexicon_label("lex", &toks(&["ok"]), &lex, 1.0, &b).is_abstain());
        let v = lexicon_label("lex", &toks(&["ok", "ok"]), &lex, 1.0, &b);
        assert_eq!(v.confidence, 0.5);
    }

    #[test]
    fn default_fillers_shipped() {
        let f = FillerSet::default();
        assert_eq!(f.len(), 12);
        assert!(f.occurs_in(&["you".to_string(), "know".to_string()]));
    }

    #[test]
    fn filler_examples() {
        let b = disfluency();
        let f = FillerSet::default();
        assert_eq!(
            filler_label("f", &toks(&["i", "uh", "went"]), &f, &b, 1.0).label,
            Some(b.disfluent.clone())
        );
        assert!(filler_label("f", &toks(&["i", "went", "home"]), &f, &b, 1.0).is_abstain());
        let phrase_only = FillerSet::from_phrases(&["you know"]);
        assert!(!filler_label("f", &toks(&["you", "know", "i", "left"]), &phrase_only, &b, 1.0).is_abstain());
        assert!(filler_label("f", &toks(&["you", "i", "know"]), &phrase_only, &b, 1.0).is_abstain());
    }

    #[test]
    fn repetition_examples() {
        let b = disfluency();
        assert!(!repetition_label("r", &toks(&["i", "i", "went"]), 1, &b, 1.0).is_abstain());
        assert!(!repetition_label("r", &toks(&["i", "went", "i", "went"]), 2, &b, 1.0).is_abstain());
        assert!(repetition_label("r", &toks(&["i", "went", "i", "went"]), 1, &b, 1.0).is_abstain());
        assert!(repetition_label("r", &toks(&["i", "went", "i", "ran"]), 2, &b, 1.0).is_abstain());
    }

    #[test]
    fn soundex_repeat_examples() {
        let b = disfluency();
        let v = soundex_repeat_label("s", &toks(&["i", "wan", "want", "tea"]), &b, 0.8);
        assert_eq!(v.label, Some(b.disfluent.clone()));
        assert_eq!(v.confidence, 0.8);
        assert!(soundex_repeat_label("s", &toks(&["i", "want", "tea"]), &b, 0.8).is_abstain());
        assert!(soundex_repeat_label("s", &toks(&[]), &b, 0.8).is_abstain());
        // equal codes
        assert!(!soundex_repeat_label("s", &toks(&["their", "there"]), &b, 0.8).is_abstain());
        // identical tokens belong to the repetition rule
        assert!(soundex_repeat_label("s", &toks(&["the", "the"]), &b, 0.8).is_abstain());
        // non-alphabetic tokens are skipped
        assert!(!soundex_repeat_label("s", &toks(&["wan", "42", "want"]), &b, 0.8).is_abstain());
    }

    #[test]
    fn fluent_default_examples() {
        let b = disfluency();
        let f = FillerSet::default();
        let v = fluent_default_label("fd", &toks(&["i", "went", "home"]), &f, 3, &b, 0.6);
        assert_eq!(v.label, Some(b.fluent.clone()));
        assert_eq!(v.confidence, 0.6);
        assert!(fluent_default_label("fd", &toks(&["i", "i", "went"]), &f, 3, &b, 0.6).is_abstain());
        assert!(fluent_default_label("fd", &toks(&["ok"]), &f, 3, &b, 0.6).is_abstain());
    }

    #[test]
    fn precomputed_votes_file() {
        let s = LabelSchema::new("sentiment", &["positive", "negative"]).unwrap();
        let src = PrecomputedVotes::parse("vader", "u1\tpositive\t0.7\nu2\tABSTAIN\t0\n", &s).unwrap();
        let utt = |id: &str| Utterance {
            id: id.into(),
            text: "x".into(),
            gold: None,
        };
        let v = src.label(&utt("u1")).unwrap();
        assert_eq!(v.label.unwrap().name, "positive");
        assert_eq!(v.confidence, 0.7);
        assert!(src.label(&utt("u2")).unwrap().is_abstain());
        assert!(src.label(&utt("u3")).unwrap().is_abstain());
        assert!(PrecomputedVotes::parse("v", "u1\tjoyful\t0.5", &s).is_err());
        assert!(PrecomputedVotes::parse("v", "u1\tpositive", &s).is_err());
        assert!(PrecomputedVotes::parse("v", "u1\tpositive\t1.5", &s).is_err());
    }

    #[test]
    fn config_binding_must_exist() {
        let s = LabelSchema::new("sentiment", &["positive", "negative"]).unwrap();
        let cfg = RuleSourceConfig::Soundex {
            id: "s".into(),
            fluent: "fluent".into(),
            disfluent: "disfluent".into(),
            confidences: RuleConfidences::default(),
        };
        assert!(cfg.build(&s).is_err());
    }

    fn brute_force_repeat(tokens: &[String], n_max: usize) -> bool {
        let mut found = false;
        for i in 0..tokens.len() {
            for n in 1..=n_max {
                if i + 2 * n <= tokens.len() {
                    let mut same = true;
                    for k in 0..n {
                        if tokens[i + k] != tokens[i + n + k] {
                            same = false;
                        }
                    }
                    found |= same;
                }
            }
        }
        found
    }

    proptest! {
        #[test]
        fn repetition_matches_brute_force(
            words in proptest::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=12),
            n_max in 1usize..=3,
        ) {
            let seq = toks(&words);
            let b = disfluency();
            let fired = !repetition_label("r", &seq, n_max, &b, 1.0).is_abstain();
            prop_assert_eq!(fired, brute_force_repeat(seq.tokens(), n_max));
        }

        #[test]
        fn lexicon_negation_is_antisymmetric(
            words in proptest::collection::vec(prop::sample::select(vec!["good", "bad", "meh", "great", "awful", "the"]), 0..10),
            theta in 0.0f64..3.0,
        ) {
            let lex = Lexicon::from_entries([("good", 2.0), ("bad", -2.5), ("great", 3.0), ("awful", -3.0), ("meh", -0.5)]);
            let b = polarity();
            let seq = toks(&words);
            let v = lexicon_label("l", &seq, &lex, theta, &b);
            let w = lexicon_label("l", &seq, &lex.negated(), theta, &b);
            match (&v.label, &w.label) {
                (None, None) => {}
                (Some(x), Some(y)) => {
                    prop_assert_ne!(x, y);
                    prop_assert_eq!(v.confidence, w.confidence);
                }
                _ => prop_assert!(false, "abstain not preserved"),
            }
        }
    }
}

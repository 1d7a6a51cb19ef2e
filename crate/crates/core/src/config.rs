//! Pipeline configuration: one TOML (or JSON) file referencing every input.
//!
//! ```toml
//! seed = 7
//! out_dir = "out"
//!
//! [data]
//! schema = "schema.toml"
//! train = "train.jsonl"
//! valid = "valid.jsonl"
//! test = "test.jsonl"
//!
//! [backend]
//! kind = "mock"
//! mock_spec = "mock.toml"
//!
//! [[sources]]
//! kind = "lexicon"
//! id = "afinn"
//! paths = ["afinn.tsv"]
//! positive = "positive"
//! negative = "negative"
//!
//! [[sources]]
//! kind = "prompt"
//! id = "tsp"
//! group = "task-specific"
//! prompts = ["prompts/sentiment_cloze.toml"]
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregate::AggregationMode;
use crate::corpus::read_structured;
use crate::prompts::remote::ENDPOINT_ENV;
use crate::prompts::RemoteConfig;
use crate::rules::RuleSourceConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub schema: PathBuf,
    pub train: PathBuf,
    #[serde(default)]
    pub valid: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    None,
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock_spec: Option<PathBuf>,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSourceConfig {
    pub id: String,
    pub prompts: Vec<PathBuf>,
    /// Replaces every member's verbalizers (class name → token).
    #[serde(default)]
    pub verbalizers: Option<BTreeMap<String, String>>,
    /// Keep only the best `k` members by validation Macro-F1.
    #[serde(default)]
    pub select_top: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputedConfig {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Rule(RuleSourceConfig),
    Prompt(PromptSourceConfig),
    Precomputed(PrecomputedConfig),
}

/// A configured source plus the group it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEntry {
    pub group: String,
    pub spec: SourceSpec,
}

impl SourceEntry {
    pub fn id(&self) -> &str {
        match &self.spec {
            SourceSpec::Rule(r) => r.id(),
            SourceSpec::Prompt(p) => &p.id,
            SourceSpec::Precomputed(p) => &p.id,
        }
    }

    pub fn referenced_paths(&self) -> Vec<&Path> {
        match &self.spec {
            SourceSpec::Rule(r) => r.referenced_paths(),
            SourceSpec::Prompt(p) => p.prompts.iter().map(|p| p.as_path()).collect(),
            SourceSpec::Precomputed(p) => vec![p.path.as_path()],
        }
    }

    fn parse(index: usize, mut raw: Value) -> Result<Self, String> {
        let at = |m: String| format!("sources[{index}]: {m}");
        let obj = raw
            .as_object_mut()
            .ok_or_else(|| at("expected a table".into()))?;
        let group = match obj.remove("group") {
            None => None,
            Some(Value::String(g)) => Some(g),
            Some(_) => return Err(at("group must be a string".into())),
        };
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| at("missing kind".into()))?
            .to_string();
        let (default_group, spec) = match kind.as_str() {
            "prompt" | "precomputed" => {
                obj.remove("kind");
                if kind == "prompt" {
                    let p = serde_json::from_value(raw).map_err(|e| at(e.to_string()))?;
                    ("prompt", SourceSpec::Prompt(p))
                } else {
                    let p = serde_json::from_value(raw).map_err(|e| at(e.to_string()))?;
                    ("precomputed", SourceSpec::Precomputed(p))
                }
            }
            _ => {
                let r = serde_json::from_value(raw).map_err(|e| at(e.to_string()))?;
                ("rule", SourceSpec::Rule(r))
            }
        };
        Ok(Self {
            group: group.unwrap_or_else(|| default_group.to_string()),
            spec,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        match &mut self.spec {
            SourceSpec::Rule(r) => r.resolve_paths(base),
            SourceSpec::Prompt(p) => p.prompts.iter_mut().for_each(|p| rebase(p, base)),
            SourceSpec::Precomputed(p) => rebase(&mut p.path, base),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    pub mode: AggregationMode,
    /// Add the majority vote of all sources as one more source column.
    pub majority_as_source: bool,
    /// Train on the soft aggregate instead of one-hot hard labels.
    pub soft_targets: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// `id<TAB>comma-separated reals` file replacing hashed features.
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Also train one classifier per source on that source's labels alone.
    pub per_source_wsm: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    out_dir: Option<PathBuf>,
    data: DataConfig,
    #[serde(default)]
    backend: BackendConfig,
    sources: Vec<Value>,
    #[serde(default)]
    aggregation: AggregationConfig,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    features: FeatureConfig,
    #[serde(default)]
    report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub backend: BackendConfig,
    pub sources: Vec<SourceEntry>,
    pub aggregation: AggregationConfig,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub report: ReportConfig,
}

fn rebase(p: &mut PathBuf, base: &Path) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads and resolves a config file. Only syntax and shape are checked
    /// here; see [`PipelineConfig::validate`].
    pub fn load(path: &Path) -> Result<Self, String> {
        let raw: RawConfig = read_structured(path).map_err(|e| e.to_string())?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_raw(raw, &base)
    }

    /// Parses TOML text with paths relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        Self::from_raw(raw, base)
    }

    fn from_raw(raw: RawConfig, base: &Path) -> Result<Self, String> {
        let sources = raw
            .sources
            .into_iter()
            .enumerate()
            .map(|(i, v)| SourceEntry::parse(i, v))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cfg = Self {
            seed: raw.seed,
            out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("out")),
            data: raw.data,
            backend: raw.backend,
            sources,
            aggregation: raw.aggregation,
            train: raw.train,
            features: raw.features,
            report: raw.report,
        };
        cfg.resolve_paths(base);
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        rebase(&mut self.out_dir, base);
        rebase(&mut self.data.schema, base);
        rebase(&mut self.data.train, base);
        for p in [&mut self.data.valid, &mut self.data.test, &mut self.backend.mock_spec, &mut self.features.embeddings]
            .into_iter()
            .flatten()
        {
            rebase(p, base);
        }
        for s in &mut self.sources {
            s.resolve_paths(base);
        }
    }

    /// Sets the run seed and propagates it to every stochastic component.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    /// Applies the endpoint override from the environment, if set.
    pub fn apply_env(&mut self) {
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.trim().is_empty() {
                self.backend.remote.endpoint = endpoint;
            }
        }
    }

    /// Every input file the run will read.
    pub fn referenced_paths(&self) -> Vec<&Path> {
        let mut out = vec![self.data.schema.as_path(), self.data.train.as_path()];
        out.extend(self.data.valid.as_deref());
        out.extend(self.data.test.as_deref());
        if self.backend.kind == BackendKind::Mock {
            out.extend(self.backend.mock_spec.as_deref());
        }
        out.extend(self.features.embeddings.as_deref());
        for s in &self.sources {
            out.extend(s.referenced_paths());
        }
        out
    }

    /// Structural checks that need no file contents.
    pub fn validate(&self) -> Result<(), String> {
        if self.sources.is_empty() {
            return Err("at least one source is required".into());
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            if s.id().trim().is_empty() {
                return Err("source ids must be nonempty".into());
            }
            if !ids.insert(s.id()) {
                return Err(format!("duplicate source id {:?}", s.id()));
            }
            if s.id() == crate::pipeline::MAJORITY_SOURCE && self.aggregation.majority_as_source {
                return Err(format!("source id {:?} is reserved", s.id()));
            }
            if let SourceSpec::Prompt(p) = &s.spec {
                if p.prompts.is_empty() {
                    return Err(format!("prompt source {:?} lists no prompts", p.id));
                }
                if p.select_top == Some(0) {
                    return Err(format!("prompt source {:?}: select_top must be at least 1", p.id));
                }
                if p.select_top.is_some() && self.data.valid.is_none() {
                    return Err(format!("prompt source {:?}: select_top needs a validation split", p.id));
                }
            }
        }
        let needs_backend = self.sources.iter().any(|s| matches!(s.spec, SourceSpec::Prompt(_)));
        match self.backend.kind {
            BackendKind::None if needs_backend => {
                return Err("prompt sources need a backend (kind = \"mock\" or \"remote\")".into())
            }
            BackendKind::Mock if self.backend.mock_spec.is_none() => {
                return Err("mock backend needs mock_spec".into())
            }
            BackendKind::Remote => {
                let r = &self.backend.remote;
                if !(r.endpoint.starts_with("http://") || r.endpoint.starts_with("https://")) {
                    return Err(format!("backend endpoint {:?} is not an http(s) URL", r.endpoint));
                }
                if r.max_in_flight == 0 || r.timeout_ms == 0 {
                    return Err("backend max_in_flight and timeout_ms must be positive".into());
                }
            }
            _ => {}
        }
        self.train.validate().map_err(|e| e.to_string())?;
        for p in self.referenced_paths() {
            if !p.is_file() {
                return Err(format!("file not found: {}", p.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        [data]
        schema = "s.toml"
        train = "train.jsonl"
        [[sources]]
        kind = "lexicon"
        id = "lex"
        paths = ["lex.tsv"]
        positive = "positive"
        negative = "negative"
        [[sources]]
        kind = "prompt"
        id = "p"
        group = "task-agnostic"
        prompts = ["a.toml"]
        verbalizers = { positive = "good", negative = "bad" }
        [[sources]]
        kind = "precomputed"
        id = "vader"
        path = "vader.tsv"
        [backend]
        kind = "mock"
        mock_spec = "mock.toml"
    "#;

    #[test]
    fn parses_sources_and_groups() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/base")).unwrap();
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.data.train, PathBuf::from("/base/train.jsonl"));
        assert_eq!(cfg.out_dir, PathBuf::from("/base/out"));
        let groups: Vec<&str> = cfg.sources.iter().map(|s| s.group.as_str()).collect();
        assert_eq!(groups, ["rule", "task-agnostic", "precomputed"]);
        match &cfg.sources[0].spec {
            SourceSpec::Rule(RuleSourceConfig::Lexicon { paths, .. }) => {
                assert_eq!(paths[0], PathBuf::from("/base/lex.tsv"))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(&cfg.sources[1].spec, SourceSpec::Prompt(p) if p.verbalizers.is_some()));
    }

    #[test]
    fn unknown_fields_and_kinds_are_rejected() {
        let typo = MINIMAL.replace("paths = [\"lex.tsv\"]", "pathz = [\"lex.tsv\"]");
        assert!(PipelineConfig::from_toml(&typo, Path::new(".")).is_err());
        let kind = MINIMAL.replace("kind = \"lexicon\"", "kind = \"oracle\"");
        assert!(PipelineConfig::from_toml(&kind, Path::new(".")).is_err());
    }

    #[test]
    fn missing_files_fail_validation() {
        let cfg = PipelineConfig::from_toml(MINIMAL, Path::new("/nonexistent")).unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.contains("file not found"), "{err}");
    }

    #[test]
    fn prompt_sources_need_a_backend() {
        let text = MINIMAL.replace("kind = \"mock\"", "kind = \"none\"");
        let cfg = PipelineConfig::from_toml(&text, Path::new(".")).unwrap();
        assert!(cfg.validate().unwrap_err().contains("backend"));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = MINIMAL.replace("id = \"vader\"", "id = \"lex\"");
        let cfg = PipelineConfig::from_toml(&text, Path::new(".")).unwrap();
        assert!(cfg.validate().unwrap_err().contains("duplicate"));
    }
}

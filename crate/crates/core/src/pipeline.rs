//! Stage orchestration: label → aggregate → train → eval → report.
//!
//! Every stage reads its inputs from the output directory and writes its
//! artifacts there, so stages can run one at a time or all together via
//! [`Pipeline::run`]. A failing stage leaves a `STALE` marker naming itself
//! and the cause.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{aggregate, build_matrix, source_stats, AggregatedLabel, LabelMatrix};
use crate::config::{BackendKind, PipelineConfig, PromptSourceConfig, SourceSpec};
use crate::corpus::{load_dataset, normalize_text, Dataset, LabelSchema};
use crate::features::{featurize, load_embeddings, SparseVector};
use crate::metrics::{evaluate_indices, EvalReport};
use crate::prompts::{
    mock_backend, LmBackend, MockSpec, PromptMember, PromptSource, PromptSpecFile, PromptStyle,
    RemoteBackend,
};
use crate::report::render_report;
use crate::rules::{PrecomputedVotes, RuleSource};
use crate::trainer::{
    config_hash, init_train, load_checkpoint, one_hot, save_checkpoint, self_train, Mlp,
    TrainConfig, TrainReport,
};
use crate::vote::WeakSource;

/// Id of the optional majority-vote source column.
pub const MAJORITY_SOURCE: &str = "majority";
pub const STALE_MARKER: &str = "STALE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Label,
    Aggregate,
    Train,
    Eval,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Label => "label",
            Stage::Aggregate => "aggregate",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("missing artifact {}: run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: Stage },
    #[error("{stage} stage failed: {cause}")]
    Stage { stage: Stage, cause: String },
}

impl PipelineError {
    /// 1 for problems with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) | PipelineError::MissingArtifact { .. } => 1,
            PipelineError::Stage { .. } => 2,
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

enum Built {
    Rule(RuleSource),
    Prompt {
        source: PromptSource,
        select_top: Option<usize>,
    },
    Precomputed(PrecomputedVotes),
}

struct BuiltSource {
    group: String,
    source: Built,
}

impl BuiltSource {
    fn weak(&self) -> &dyn WeakSource {
        match &self.source {
            Built::Rule(r) => r,
            Built::Prompt { source, .. } => source,
            Built::Precomputed(p) => p,
        }
    }
}

/// Source id and report group, persisted by the label stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub id: String,
    pub group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScore {
    pub prompt: String,
    pub valid_macro_f1: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSelection {
    pub source: String,
    pub scores: Vec<PromptScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSourceTraining {
    pub source: String,
    /// `None` when training succeeded, otherwise why it was skipped.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub samples: usize,
    pub covered: usize,
    pub config_hash: String,
    pub init_checksum: String,
    pub self_training: TrainReport,
    pub per_source: Vec<PerSourceTraining>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEval {
    pub source: String,
    pub group: String,
    pub coverage: f64,
    /// Macro-F1 over the samples this source labeled.
    pub covered_macro_f1: Option<f64>,
    /// Abstentions counted as false negatives.
    pub baseline: EvalReport<f64>,
    /// Classifier trained on this source alone, when enabled.
    pub wsm_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub split: Split,
    pub n_samples: usize,
    pub n_gold: usize,
    pub wsm: EvalReport<f64>,
    pub majority: EvalReport<f64>,
    pub sources: Vec<SourceEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub seed: u64,
    pub splits: Vec<SplitEval>,
}

/// A validated config with its inputs loaded.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub schema: LabelSchema,
    datasets: Vec<(Split, Dataset)>,
    sources: Vec<BuiltSource>,
    embeddings: Option<HashMap<String, Vec<f64>>>,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("splits", &self.datasets.iter().map(|(s, d)| (s.name(), d.len())).collect::<Vec<_>>())
            .finish()
    }
}

fn invalid(e: impl fmt::Display) -> PipelineError {
    PipelineError::Validation(e.to_string())
}

fn build_backend(config: &PipelineConfig) -> Result<Option<Arc<dyn LmBackend>>> {
    Ok(match config.backend.kind {
        BackendKind::None => None,
        BackendKind::Mock => {
            let path = config.backend.mock_spec.as_ref().expect("validated");
            Some(Arc::new(mock_backend(MockSpec::load(path).map_err(invalid)?)))
        }
        BackendKind::Remote => Some(Arc::new(RemoteBackend::new(config.backend.remote.clone()))),
    })
}

fn build_prompt_source(
    p: &PromptSourceConfig,
    schema: &LabelSchema,
    backend: Arc<dyn LmBackend>,
) -> Result<PromptSource> {
    let caps = backend.capabilities();
    let mut members = Vec::new();
    for path in &p.prompts {
        let mut spec = PromptSpecFile::load(path).map_err(invalid)?;
        if let Some(v) = &p.verbalizers {
            spec.verbalizers = v.clone();
        }
        let member = PromptMember::from_spec(&spec, schema)
            .map_err(|e| invalid(format!("source {:?}: {e}", p.id)))?;
        let supported = match member.template.style {
            PromptStyle::Nli => caps.entailment,
            PromptStyle::Cloze => caps.mask_fill,
        };
        if !supported {
            return Err(invalid(format!(
                "source {:?}: backend cannot serve {:?} prompt {}",
                p.id, member.template.style, member.template.id
            )));
        }
        members.push(member);
    }
    Ok(PromptSource {
        id: p.id.clone(),
        members,
        schema: schema.clone(),
        backend,
    })
}

impl Pipeline {
    /// Validates `config` and loads every input. Nothing is written.
    pub fn prepare(mut config: PipelineConfig) -> Result<Self> {
        config.apply_env();
        config.validate().map_err(PipelineError::Validation)?;
        let schema = LabelSchema::load(&config.data.schema).map_err(invalid)?;
        let mut datasets = vec![(Split::Train, config.data.train.clone())];
        datasets.extend(config.data.valid.clone().map(|p| (Split::Valid, p)));
        datasets.extend(config.data.test.clone().map(|p| (Split::Test, p)));
        let datasets = datasets
            .into_iter()
            .map(|(split, path)| {
                let ds = load_dataset(&path, schema.clone())
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                if ds.is_empty() {
                    return Err(invalid(format!("{} split is empty", split.name())));
                }
                Ok((split, ds))
            })
            .collect::<Result<Vec<_>>>()?;

        let backend = build_backend(&config)?;
        let mut sources = Vec::new();
        for entry in &config.sources {
            let source = match &entry.spec {
                SourceSpec::Rule(r) => Built::Rule(
                    r.build(&schema)
                        .map_err(|e| invalid(format!("source {:?}: {e}", r.id())))?,
                ),
                SourceSpec::Prompt(p) => Built::Prompt {
                    source: build_prompt_source(p, &schema, backend.clone().expect("validated"))?,
                    select_top: p.select_top,
                },
                SourceSpec::Precomputed(p) => Built::Precomputed(
                    PrecomputedVotes::load(p.id.clone(), &p.path, &schema)
                        .map_err(|e| invalid(format!("source {:?}: {e}", p.id)))?,
                ),
            };
            sources.push(BuiltSource {
                group: entry.group.clone(),
                source,
            });
        }
        let embeddings = match &config.features.embeddings {
            Some(path) => Some(load_embeddings(path).map_err(invalid)?),
            None => None,
        };
        Ok(Self {
            config,
            schema,
            datasets,
            sources,
            embeddings,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn dataset(&self, split: Split) -> Option<&Dataset> {
        self.datasets.iter().find(|(s, _)| *s == split).map(|(_, d)| d)
    }

    fn splits(&self) -> impl Iterator<Item = Split> + '_ {
        self.datasets.iter().map(|(s, _)| *s)
    }

    /// Runs `f` as `stage`, maintaining the stale marker.
    fn guarded<T>(&self, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let marker = self.artifact(STALE_MARKER);
        match f() {
            Ok(v) => {
                if let Ok(text) = fs::read_to_string(&marker) {
                    if text.lines().next() == Some(&format!("stage: {stage}")) {
                        let _ = fs::remove_file(&marker);
                    }
                }
                Ok(v)
            }
            Err(e) => {
                if matches!(e, PipelineError::Stage { .. }) {
                    let _ = fs::create_dir_all(self.out_dir());
                    let _ = fs::write(
                        &marker,
                        format!("stage: {stage}\ncause: {e}\nartifacts from this stage onward may be partial\n"),
                    );
                }
                Err(e)
            }
        }
    }

    fn write(&self, stage: Stage, name: &str, contents: &str) -> Result<()> {
        let fail = |e: std::io::Error| PipelineError::Stage {
            stage,
            cause: format!("writing {name}: {e}"),
        };
        fs::create_dir_all(self.out_dir()).map_err(fail)?;
        fs::write(self.artifact(name), contents).map_err(fail)
    }

    fn write_json<T: Serialize>(&self, stage: Stage, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write(stage, name, &text)
    }

    fn read(&self, name: &str, producer: Stage) -> Result<String> {
        let path = self.artifact(name);
        fs::read_to_string(&path).map_err(|_| PipelineError::MissingArtifact { path, stage: producer })
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, stage: Stage, name: &str, producer: Stage) -> Result<T> {
        serde_json::from_str(&self.read(name, producer)?).map_err(|e| PipelineError::Stage {
            stage,
            cause: format!("{name}: {e}"),
        })
    }

    fn read_matrix(&self, stage: Stage, split: Split) -> Result<LabelMatrix> {
        let name = format!("matrix.{}.jsonl", split.name());
        let matrix = LabelMatrix::from_jsonl(&self.read(&name, Stage::Label)?, &self.schema).map_err(|e| {
            PipelineError::Stage {
                stage,
                cause: format!("{name}: {e}"),
            }
        })?;
        let ds = self.dataset(split).expect("split present");
        if matrix.sample_ids != ds.ids() {
            return Err(PipelineError::Stage {
                stage,
                cause: format!("{name} does not match the {} dataset; rerun `label`", split.name()),
            });
        }
        Ok(matrix)
    }

    /// Ranks each selecting prompt source's members by validation Macro-F1
    /// and keeps the top `k`.
    fn select_prompts(&self) -> Result<(Vec<PromptSelection>, HashMap<String, PromptSource>)> {
        let mut report = Vec::new();
        let mut chosen = HashMap::new();
        for b in &self.sources {
            let Built::Prompt {
                source,
                select_top: Some(k),
            } = &b.source
            else {
                continue;
            };
            let valid = self.dataset(Split::Valid).expect("validated");
            let labeled: Vec<_> = valid.utterances.iter().filter(|u| u.gold.is_some()).collect();
            if labeled.is_empty() {
                return Err(PipelineError::Stage {
                    stage: Stage::Label,
                    cause: format!("source {:?}: prompt selection needs gold labels in valid", source.id),
                });
            }
            let gold: Vec<usize> = labeled.iter().map(|u| u.gold.as_ref().expect("filtered").index).collect();
            let mut scores: Vec<(usize, f64)> = source
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let preds: Vec<Option<usize>> = labeled
                        .iter()
                        .map(|u| {
                            m.distribution(u, &self.schema, source.backend.as_ref())
                                .ok()
                                .map(|d| crate::prompts::argmax(&d))
                        })
                        .collect();
                    let f1 = evaluate_indices::<f64>(&preds, &gold, &names(&self.schema))
                        .map(|r| r.macro_f1)
                        .unwrap_or(0.0);
                    (i, f1)
                })
                .collect();
            scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let keep: Vec<usize> = scores.iter().take(*k).map(|(i, _)| *i).collect();
            let mut picked = source.clone();
            picked.members = source
                .members
                .iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, m)| m.clone())
                .collect();
            report.push(PromptSelection {
                source: source.id.clone(),
                scores: scores
                    .iter()
                    .map(|(i, f1)| PromptScore {
                        prompt: source.members[*i].template.id.clone(),
                        valid_macro_f1: *f1,
                        selected: keep.contains(i),
                    })
                    .collect(),
            });
            chosen.insert(source.id.clone(), picked);
        }
        Ok((report, chosen))
    }

    /// Labels every split with every source; writes `matrix.<split>.jsonl`,
    /// `source_stats.<split>.json` and `sources.json`.
    pub fn label(&self) -> Result<()> {
        self.guarded(Stage::Label, || {
            let (selection, chosen) = self.select_prompts()?;
            if !selection.is_empty() {
                self.write_json(Stage::Label, "prompt_selection.json", &selection)?;
            }
            let refs: Vec<&dyn WeakSource> = self
                .sources
                .iter()
                .map(|b| match chosen.get(b.weak().id()) {
                    Some(p) => p as &dyn WeakSource,
                    None => b.weak(),
                })
                .collect();
            for (split, ds) in &self.datasets {
                let mut matrix = build_matrix(ds, &refs).map_err(|e| PipelineError::Stage {
                    stage: Stage::Label,
                    cause: e.to_string(),
                })?;
                if self.config.aggregation.majority_as_source {
                    matrix = matrix.with_majority_column(MAJORITY_SOURCE, &self.schema);
                }
                self.write(
                    Stage::Label,
                    &format!("matrix.{}.jsonl", split.name()),
                    &matrix.to_jsonl(&self.schema),
                )?;
                let gold = ds.gold();
                let has_gold = gold.iter().any(Option::is_some);
                let stats = source_stats(&matrix, has_gold.then_some(gold.as_slice()), &self.schema).map_err(|e| {
                    PipelineError::Stage {
                        stage: Stage::Label,
                        cause: e.to_string(),
                    }
                })?;
                self.write_json(Stage::Label, &format!("source_stats.{}.json", split.name()), &stats)?;
            }
            let mut info: Vec<SourceInfo> = self
                .sources
                .iter()
                .map(|b| SourceInfo {
                    id: b.weak().id().to_string(),
                    group: b.group.clone(),
                })
                .collect();
            if self.config.aggregation.majority_as_source {
                info.push(SourceInfo {
                    id: MAJORITY_SOURCE.into(),
                    group: MAJORITY_SOURCE.into(),
                });
            }
            self.write_json(Stage::Label, "sources.json", &info)
        })
    }

    /// The matrix without the majority column, so aggregation never counts
    /// the majority twice.
    fn base_matrix(&self, mut m: LabelMatrix) -> LabelMatrix {
        if let Some(col) = m.source_ids.iter().position(|s| s == MAJORITY_SOURCE) {
            if self.config.aggregation.majority_as_source {
                m.source_ids.remove(col);
                for row in m.votes.iter_mut() {
                    row.remove(col);
                }
            }
        }
        m
    }

    /// Aggregates each split's matrix into `aggregated.<split>.jsonl`.
    pub fn aggregate(&self) -> Result<()> {
        self.guarded(Stage::Aggregate, || {
            for split in self.splits() {
                let matrix = self.base_matrix(self.read_matrix(Stage::Aggregate, split)?);
                let labels = aggregate(&matrix, &self.schema, self.config.aggregation.mode);
                let mut text = String::new();
                for l in &labels {
                    text.push_str(&serde_json::to_string(l).expect("label serializes"));
                    text.push('\n');
                }
                self.write(Stage::Aggregate, &format!("aggregated.{}.jsonl", split.name()), &text)?;
            }
            Ok(())
        })
    }

    /// The trainer config actually used: the feature dimension follows the
    /// embedding width when embeddings replace hashed features.
    pub fn effective_train_config(&self) -> TrainConfig {
        let mut cfg = self.config.train.clone();
        if let Some(width) = self.embeddings.as_ref().and_then(|e| e.values().next()).map(Vec::len) {
            cfg.dim = width.max(2);
        }
        cfg
    }

    fn features(&self, stage: Stage, ds: &Dataset) -> Result<Vec<SparseVector<f64>>> {
        let dim = self.effective_train_config().dim;
        ds.utterances
            .iter()
            .map(|u| match &self.embeddings {
                None => Ok(featurize(&normalize_text(&u.text), dim)),
                Some(table) => {
                    let row = table.get(&u.id).ok_or_else(|| PipelineError::Stage {
                        stage,
                        cause: format!("no embedding for utterance {:?}", u.id),
                    })?;
                    let mut padded = row.clone();
                    padded.resize(dim, 0.0);
                    Ok(SparseVector::from_dense(&padded))
                }
            })
            .collect()
    }

    fn train_one(&self, x: &[SparseVector<f64>], targets: &[Option<Vec<f64>>]) -> Result<(Mlp<f64>, Mlp<f64>, TrainReport), String> {
        let cfg = self.effective_train_config();
        let init = init_train(x, targets, self.schema.len(), &cfg).map_err(|e| e.to_string())?;
        let (params, report) = self_train(&init, x, &cfg).map_err(|e| e.to_string())?;
        Ok((init, params, report))
    }

    /// Trains on the aggregated train labels; writes `params.bin` and
    /// `train_report.json` (plus `params.<source>.bin` per source when
    /// enabled).
    pub fn train(&self) -> Result<()> {
        self.guarded(Stage::Train, || {
            let stage = Stage::Train;
            let fail = |cause: String| PipelineError::Stage { stage, cause };
            let ds = self.dataset(Split::Train).expect("train split");
            let labels: Vec<AggregatedLabel> = self
                .read("aggregated.train.jsonl", Stage::Aggregate)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()
                .map_err(|e| fail(format!("aggregated.train.jsonl: {e}")))?;
            if labels.iter().map(|l| l.id.as_str()).ne(ds.utterances.iter().map(|u| u.id.as_str())) {
                return Err(fail("aggregated.train.jsonl does not match the train dataset; rerun `aggregate`".into()));
            }
            let classes = self.schema.len();
            let targets: Vec<Option<Vec<f64>>> = labels
                .iter()
                .map(|l| {
                    if self.config.aggregation.soft_targets {
                        l.soft.clone()
                    } else {
                        l.hard
                            .as_deref()
                            .and_then(|h| self.schema.class(h))
                            .map(|c| one_hot(c.index, classes))
                    }
                })
                .collect();
            let x = self.features(stage, ds)?;
            let cfg = self.effective_train_config();
            let (init, params, report) = self.train_one(&x, &targets).map_err(fail)?;
            fs::create_dir_all(self.out_dir()).map_err(|e| fail(e.to_string()))?;
            save_checkpoint(&self.artifact("params.bin"), &params, &cfg).map_err(|e| fail(e.to_string()))?;

            let mut per_source = Vec::new();
            if self.config.report.per_source_wsm {
                let matrix = self.read_matrix(stage, Split::Train)?;
                for (col, id) in matrix.source_ids.iter().enumerate() {
                    let t: Vec<Option<Vec<f64>>> = matrix
                        .column(col)
                        .into_iter()
                        .map(|l| l.map(|c| one_hot(c.index, classes)))
                        .collect();
                    let skipped = match self.train_one(&x, &t) {
                        Ok((_, p, _)) => {
                            save_checkpoint(&self.artifact(&format!("params.{id}.bin")), &p, &cfg)
                                .map_err(|e| fail(e.to_string()))?;
                            None
                        }
                        Err(e) => Some(e),
                    };
                    per_source.push(PerSourceTraining {
                        source: id.clone(),
                        skipped,
                    });
                }
            }
            let summary = TrainSummary {
                samples: x.len(),
                covered: targets.iter().filter(|t| t.is_some()).count(),
                config_hash: config_hash(&cfg),
                init_checksum: init.checksum(),
                self_training: report,
                per_source,
            };
            self.write_json(stage, "train_report.json", &summary)
        })
    }

    /// Evaluates sources, the majority vote and the trained classifier on
    /// the valid and test splits (train when neither exists); writes
    /// `eval.json`.
    pub fn eval(&self) -> Result<EvalSummary> {
        self.guarded(Stage::Eval, || {
            let stage = Stage::Eval;
            let fail = |cause: String| PipelineError::Stage { stage, cause };
            let cfg = self.effective_train_config();
            let params_path = self.artifact("params.bin");
            if !params_path.is_file() {
                return Err(PipelineError::MissingArtifact {
                    path: params_path,
                    stage: Stage::Train,
                });
            }
            let (params, _) = load_checkpoint::<f64>(&params_path, &cfg).map_err(|e| fail(e.to_string()))?;
            let info: Vec<SourceInfo> = self.read_json(stage, "sources.json", Stage::Label)?;
            let groups: HashMap<&str, &str> = info.iter().map(|i| (i.id.as_str(), i.group.as_str())).collect();
            let mut per_source_params = HashMap::new();
            if self.config.report.per_source_wsm {
                for i in &info {
                    let p = self.artifact(&format!("params.{}.bin", i.id));
                    if p.is_file() {
                        let (m, _) = load_checkpoint::<f64>(&p, &cfg).map_err(|e| fail(e.to_string()))?;
                        per_source_params.insert(i.id.clone(), m);
                    }
                }
            }

            let mut eval_splits: Vec<Split> = self.splits().filter(|s| *s != Split::Train).collect();
            if eval_splits.is_empty() {
                eval_splits.push(Split::Train);
            }
            let class_names = names(&self.schema);
            let mut out = Vec::new();
            for split in eval_splits {
                let ds = self.dataset(split).expect("split present");
                let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.utterances[i].gold.is_some()).collect();
                if keep.is_empty() {
                    continue;
                }
                let gold: Vec<usize> = keep
                    .iter()
                    .map(|&i| ds.utterances[i].gold.as_ref().expect("filtered").index)
                    .collect();
                let eval = |preds: Vec<Option<usize>>| {
                    evaluate_indices::<f64>(&preds, &gold, &class_names).map_err(|e| fail(e.to_string()))
                };
                let x = self.features(stage, ds)?;
                let predict = |m: &Mlp<f64>| -> Result<Vec<Option<usize>>> {
                    keep.iter()
                        .map(|&i| m.predict(&x[i]).map(Some).map_err(|e| fail(e.to_string())))
                        .collect()
                };
                let mut wsm = eval(predict(&params)?)?;
                wsm.coverage = None;

                let matrix = self.read_matrix(stage, split)?;
                let base = self.base_matrix(matrix.clone());
                let majority = eval(
                    keep.iter()
                        .map(|&i| crate::aggregate::majority_vote(&base.votes[i], &self.schema).map(|c| c.index))
                        .collect(),
                )?;
                let gold_all = ds.gold();
                let stats = source_stats(&matrix, Some(gold_all.as_slice()), &self.schema)
                    .map_err(|e| fail(e.to_string()))?;
                let mut sources = Vec::new();
                for (col, st) in stats.into_iter().enumerate() {
                    let column = matrix.column(col);
                    let baseline = eval(keep.iter().map(|&i| column[i].as_ref().map(|c| c.index)).collect())?;
                    let wsm_macro_f1 = match per_source_params.get(&st.source_id) {
                        Some(m) => Some(eval(predict(m)?)?.macro_f1),
                        None => None,
                    };
                    sources.push(SourceEval {
                        group: groups.get(st.source_id.as_str()).unwrap_or(&"rule").to_string(),
                        source: st.source_id,
                        coverage: st.coverage,
                        covered_macro_f1: st.covered_macro_f1,
                        baseline,
                        wsm_macro_f1,
                    });
                }
                out.push(SplitEval {
                    split,
                    n_samples: ds.len(),
                    n_gold: keep.len(),
                    wsm,
                    majority,
                    sources,
                });
            }
            let summary = EvalSummary {
                task: self.schema.task_name().to_string(),
                seed: self.config.seed,
                splits: out,
            };
            self.write_json(stage, "eval.json", &summary)?;
            Ok(summary)
        })
    }

    /// Renders `eval.json` as `report.md`; returns the text.
    pub fn report(&self) -> Result<String> {
        self.guarded(Stage::Report, || {
            let summary: EvalSummary = self.read_json(Stage::Report, "eval.json", Stage::Eval)?;
            let train: Option<TrainSummary> = self
                .read("train_report.json", Stage::Train)
                .ok()
                .and_then(|t| serde_json::from_str(&t).ok());
            let text = render_report(&summary, train.as_ref());
            self.write(Stage::Report, "report.md", &text)?;
            Ok(text)
        })
    }

    /// All stages in order.
    pub fn run(&self) -> Result<String> {
        self.label()?;
        self.aggregate()?;
        self.train()?;
        self.eval()?;
        self.report()
    }
}

fn names(schema: &LabelSchema) -> Vec<String> {
    schema.classes().iter().map(|c| c.name.clone()).collect()
}

/// Loads `path` and runs every stage.
pub fn run_pipeline(path: &Path, seed: Option<u64>, out_dir: Option<&Path>) -> Result<String> {
    let mut config = PipelineConfig::load(path).map_err(PipelineError::Validation)?;
    if let Some(s) = seed {
        config.set_seed(s);
    }
    if let Some(o) = out_dir {
        config.out_dir = o.to_path_buf();
    }
    Pipeline::prepare(config)?.run()
}

//! Weak supervision for text classification.
//!
//! Rule-based and prompt-based weak sources label an unlabeled corpus, their
//! votes are aggregated into noisy labels, and a small classifier is trained
//! on those labels with contrastive self-training.

pub mod aggregate;
pub mod config;
pub mod corpus;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod report;
pub mod rules;
pub mod scalar;
pub mod soundex;
pub mod synthetic;
pub mod trainer;
pub mod vote;

pub use aggregate::{
    aggregate, build_matrix, majority_vote, soft_aggregate, source_stats, AggregatedLabel,
    AggregationMode, LabelMatrix, SourceStats,
};
pub use corpus::{
    load_dataset, load_lexicon, normalize_text, ClassLabel, Dataset, LabelSchema, Lexicon,
    TokenSequence, Utterance,
};
pub use metrics::{macro_f1, rule_baseline_eval};
pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, Pipeline, PipelineError, Stage};
pub use prompts::{
    cloze_label, ensemble_prompt_label, mock_backend, nli_label, render_cloze,
    render_nli_hypotheses, Demonstration, LmBackend, PromptStyle, PromptTemplate,
};
pub use scalar::{Real, Scalar};
pub use soundex::{soundex, SoundexCode};
pub use features::{featurize, SparseVector};
pub use trainer::{init_train, self_train, Mlp, TrainConfig, TrainError, TrainReport};
pub use vote::{LabelVote, SourceError, WeakSource};

/// Evaluation report in `f64`.
pub type EvalReport = metrics::EvalReport<f64>;
/// Evaluation report in exact rational arithmetic.
pub type ExactEvalReport = metrics::EvalReport<num_rational::Ratio<i64>>;
/// Classifier parameters in `f64`.
pub type ClassifierParams = trainer::Mlp<f64>;
/// Classifier parameters in `f32`.
pub type ClassifierParamsF32 = trainer::Mlp<f32>;
/// Hashed feature vector in `f64`.
pub type FeatureVector = features::SparseVector<f64>;

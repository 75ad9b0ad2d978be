//! Synthetic corpora and the evaluation experiments run on them.

mod budget;
mod corpus;
mod render;
mod sweep;

use thiserror::Error;

pub use budget::{budget_sim, run_setting, select_setting, BudgetConfig, Selection, Setting, SettingReport};
pub use corpus::{
    generate_corpus, BaseCounts, Corpus, CorpusItem, CorpusSpec, GenerationStats, ImageRecipe, ManifestEntry,
    Violation, ViolationKind,
};
pub use render::{render_base, BaseRecipe, Family, Perturbation, PerturbationKind};
pub use sweep::{sweep_threshold_experiment, SweepPair, SweepResult, DEFAULT_SWEEP_PAIRS, SWEEP_MAX_DISTANCE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid corpus spec: {0}")]
    Spec(String),
    #[error("invalid budget config: {0}")]
    Budget(String),
    #[error("sweep needs {needed} candidate pairs, corpus has {available}")]
    InsufficientPairs { needed: usize, available: usize },
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Classify(#[from] crate::classify::ClassifyError),
    #[error(transparent)]
    Dedup(#[from] crate::dedup::DedupError),
}

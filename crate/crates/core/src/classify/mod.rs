//! Linear softmax classifiers over fixed image features, used for both the
//! binary relevancy filter and 3-class damage assessment.

mod dataset;
mod features;
mod model;
mod validation;

pub use dataset::{build_relevance_dataset, Dataset, DEFAULT_IRRELEVANT_CATEGORIES};
pub use features::{extract_features, extract_with_hash, FeatureVector, FEATURE_DIM, FEATURE_SPEC_ID};
pub use model::{
    decode_model, encode_model, train, train_checkpointed, ClassifierModel, FeatureSpec, ModelFileError,
    Objective, TrainParams, TrainedModel,
};
pub use validation::{
    cross_validate, split_indices, stratified_folds, train_split, CvResult, SplitResult, SplitSizes,
};

use thiserror::Error;

use crate::metrics::MetricsError;

pub const RELEVANT: &str = "relevant";
pub const IRRELEVANT: &str = "irrelevant";

/// Probability cut-off on the relevant class.
pub const RELEVANCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least two classes")]
    TooFewClasses,
    #[error("class {class:?} has {count} examples, need at least {needed}")]
    DegenerateClass { class: String, count: usize, needed: usize },
    #[error("label index {0} is out of range")]
    LabelIndex(usize),
    #[error("feature {index} of example {example} is not finite")]
    NonFinite { example: usize, index: usize },
    #[error("feature dimension {got} does not match expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("features and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("fold count {k} is invalid for {n} examples")]
    FoldCount { k: usize, n: usize },
    #[error("no relevant candidates (severe or mild images)")]
    NoRelevant,
    #[error("no irrelevant candidates (none-labeled images with a listed tag)")]
    NoIrrelevant,
    #[error("model has no class named {0:?}")]
    MissingClass(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

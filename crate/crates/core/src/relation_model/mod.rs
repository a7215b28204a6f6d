//! Three-way (Temporal / Causal / None) event-pair relation classifier.
//!
//! Five blocks are pooled from a frozen encoder behind an
//! [`EmbeddingProvider`](crate::providers::EmbeddingProvider): a context
//! summary plus the head verb, head object, tail verb and tail object span
//! vectors. A one-hidden-layer head is trained on their concatenation.

mod cv;
mod features;
mod train;

pub use cv::{
    baseline_majority, baseline_random, baseline_static_lr, crossvalidate_features, static_features, stratified_folds,
    CvSummary, StaticLrReport,
};
pub use features::{
    align_phrase, encode_sides, example_sides, featurize, featurize_all, truncate_tokens, EventEncoding, EventSide,
    RelationFeatures,
};
pub use train::{
    stratified_holdout, train_on_features, ClassifierConfig, Prediction, RelationClassifier, TrainReport, N_CLASSES,
};

use crate::error::Result;
use crate::kg_distill::{RelationDataset, RelationLabel};
use crate::providers::EmbeddingProvider;

fn dataset_features(
    dataset: &RelationDataset,
    config: &ClassifierConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<(Vec<Vec<f64>>, Vec<RelationLabel>)> {
    let feats = featurize_all(&dataset.examples, provider, config.max_tokens, config.embed_batch_size)?;
    Ok((feats.iter().map(RelationFeatures::concat).collect(), dataset.labels()))
}

pub fn train(
    dataset: &RelationDataset,
    config: &ClassifierConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<(RelationClassifier, TrainReport)> {
    let (xs, ys) = dataset_features(dataset, config, provider)?;
    train_on_features(&xs, &ys, config)
}

pub fn crossvalidate(
    dataset: &RelationDataset,
    folds: usize,
    config: &ClassifierConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<CvSummary> {
    let (xs, ys) = dataset_features(dataset, config, provider)?;
    crossvalidate_features(&xs, &ys, folds, config)
}

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::train::{train_on_features, ClassifierConfig, N_CLASSES};
use crate::error::{Error, Result};
use crate::evaluation::{macro_metrics, mean_std, MeanStd, Metrics};
use crate::kg_distill::{RelationDataset, RelationLabel};
use crate::nn::{LogisticConfig, LogisticRegression};
use crate::providers::StaticVectorTable;
use crate::rng;

/// Fold id per example. Each class is shuffled under `seed` and dealt
/// round-robin, continuing the deal across classes so fold sizes stay
/// within one of each other.
pub fn stratified_folds(ys: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Precondition("cross-validation needs at least 2 folds".into()));
    }
    let mut r = rng::seeded(seed);
    let mut assignment = vec![0usize; ys.len()];
    let mut dealt = 0usize;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] == c).collect();
        if idx.len() < folds {
            return Err(Error::Precondition(format!("class {c} has {} examples for {folds} folds", idx.len())));
        }
        idx.shuffle(&mut r);
        for i in idx {
            assignment[i] = dealt % folds;
            dealt += 1;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<Metrics>,
    pub accuracy: MeanStd,
    pub weighted_precision: MeanStd,
    pub weighted_recall: MeanStd,
    pub macro_f1: MeanStd,
    /// Best epoch per fold, for neural runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub best_epochs: Vec<usize>,
}

impl CvSummary {
    pub fn from_folds(folds: Vec<Metrics>) -> Self {
        let stat = |f: fn(&Metrics) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
        CvSummary {
            accuracy: stat(|m| m.accuracy),
            weighted_precision: stat(|m| m.weighted_precision),
            weighted_recall: stat(|m| m.weighted_recall),
            macro_f1: stat(|m| m.macro_f1),
            folds,
            best_epochs: Vec::new(),
        }
    }
}

/// k-fold evaluation of the neural head on precomputed features.
pub fn crossvalidate_features(
    xs: &[Vec<f64>],
    ys: &[RelationLabel],
    folds: usize,
    config: &ClassifierConfig,
) -> Result<CvSummary> {
    let y: Vec<usize> = ys.iter().map(|l| l.index()).collect();
    let assignment = stratified_folds(&y, N_CLASSES, folds, config.seed)?;
    let mut metrics = Vec::with_capacity(folds);
    let mut best_epochs = Vec::with_capacity(folds);
    for f in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| assignment[i] != f);
        let trx: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
        let try_: Vec<RelationLabel> = train.iter().map(|&i| ys[i]).collect();
        let fold_config = ClassifierConfig { seed: rng::derive(config.seed, 100 + f as u64), ..config.clone() };
        let (model, report) = train_on_features(&trx, &try_, &fold_config)?;
        let preds: Vec<usize> = test.iter().map(|&i| model.mlp.logits(&xs[i])).map(|l| crate::nn::argmax(&l)).collect();
        let gold: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let m = macro_metrics(&preds, &gold, N_CLASSES)?;
        log::info!("fold {f}: accuracy {:.4} macro-F1 {:.4}", m.accuracy, m.macro_f1);
        metrics.push(m);
        best_epochs.push(report.best_epoch);
    }
    let mut summary = CvSummary::from_folds(metrics);
    summary.best_epochs = best_epochs;
    Ok(summary)
}

fn label_ids(dataset: &RelationDataset) -> Vec<usize> {
    dataset.examples.iter().map(|e| e.label.index()).collect()
}

/// Always predicts the most frequent class (earliest class on ties).
pub fn baseline_majority(dataset: &RelationDataset) -> Result<Metrics> {
    let gold = label_ids(dataset);
    let mut counts = [0usize; N_CLASSES];
    gold.iter().for_each(|&c| counts[c] += 1);
    let majority = (0..N_CLASSES).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0);
    macro_metrics(&vec![majority; gold.len()], &gold, N_CLASSES)
}

/// Uniformly random predictions.
pub fn baseline_random(dataset: &RelationDataset, seed: u64) -> Result<Metrics> {
    let gold = label_ids(dataset);
    let mut r = rng::seeded(seed);
    let preds: Vec<usize> = gold.iter().map(|_| r.random_range(0..N_CLASSES)).collect();
    macro_metrics(&preds, &gold, N_CLASSES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticLrReport {
    pub cv: CvSummary,
    pub tokens: usize,
    pub oov_tokens: usize,
}

/// Mean word vector of the head context concatenated with that of the tail
/// context; out-of-vocabulary words contribute zero vectors.
pub fn static_features(dataset: &RelationDataset, table: &StaticVectorTable) -> (Vec<Vec<f64>>, usize, usize) {
    let mut tokens = 0;
    let mut oov = 0;
    let xs = dataset
        .examples
        .iter()
        .map(|e| {
            let (mut h, ho) = table.phrase_vector(&e.head_context);
            let (t, to) = table.phrase_vector(&e.tail_context);
            tokens += e.head_context.split_whitespace().count() + e.tail_context.split_whitespace().count();
            oov += ho + to;
            h.extend(t);
            h
        })
        .collect();
    (xs, tokens, oov)
}

/// Multinomial logistic regression over static word vectors, k-fold.
pub fn baseline_static_lr(
    dataset: &RelationDataset,
    table: &StaticVectorTable,
    folds: usize,
    seed: u64,
    config: &LogisticConfig,
) -> Result<StaticLrReport> {
    let (xs, tokens, oov_tokens) = static_features(dataset, table);
    if oov_tokens > 0 {
        log::warn!("{oov_tokens} of {tokens} context tokens missing from the vector table");
    }
    let y = label_ids(dataset);
    let assignment = stratified_folds(&y, N_CLASSES, folds, seed)?;
    let mut metrics = Vec::with_capacity(folds);
    for f in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| assignment[i] != f);
        let trx: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
        let try_: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let model = LogisticRegression::fit(&trx, &try_, N_CLASSES, config)?;
        let preds: Vec<usize> = test.iter().map(|&i| model.predict(&xs[i])).collect();
        let gold: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        metrics.push(macro_metrics(&preds, &gold, N_CLASSES)?);
    }
    Ok(StaticLrReport { cv: CvSummary::from_folds(metrics), tokens, oov_tokens })
}

//! Document features built from narrative-cluster frequencies, frame
//! predictors trained on them, and the comparison baselines.
//!
//! For a document with `n_k` chains in cluster `k`, the raw feature is
//! `f_k = n_k`; the standardized feature is `(f_k - mu) / sigma` with `mu`
//! and `sigma` the mean and population standard deviation of the document's
//! `k` raw values.

pub mod lda;
pub mod neural;

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::{embed_sentences, kmeans, ClusterModel, KMeansConfig};
use crate::error::{Error, Result};
use crate::evaluation::{macro_metrics, Metrics};
use crate::events::EventMention;
use crate::nn::{LogisticConfig, LogisticRegression};
use crate::providers::EmbeddingProvider;
use crate::rng;

pub use lda::{gibbs_lda, tokenize, LdaConfig, LdaModel};
pub use neural::{train_neural_head, FusionHead, HeadData, HeadInput, NeuralHeadConfig, NeuralReport};

/// Chains per cluster for one document.
pub fn cluster_frequencies(chain_clusters: &[usize], k: usize) -> Result<Vec<usize>> {
    let mut raw = vec![0usize; k];
    for &c in chain_clusters {
        *raw.get_mut(c).ok_or_else(|| Error::Precondition(format!("cluster {c} outside k = {k}")))? += 1;
    }
    Ok(raw)
}

/// Per-vector z-scores with the population standard deviation; a constant
/// vector maps to zeros.
pub fn standardize(raw: &[usize]) -> Vec<f64> {
    if raw.is_empty() {
        return Vec::new();
    }
    let k = raw.len() as f64;
    let mu = raw.iter().map(|&v| v as f64).sum::<f64>() / k;
    let var = raw.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / k;
    let sigma = var.sqrt();
    if sigma == 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&v| (v as f64 - mu) / sigma).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatureVector {
    pub doc_id: String,
    pub k: usize,
    pub raw: Vec<usize>,
    pub standardized: Vec<f64>,
}

impl ClusterFeatureVector {
    pub fn from_raw(doc_id: impl Into<String>, raw: Vec<usize>) -> Self {
        ClusterFeatureVector { doc_id: doc_id.into(), k: raw.len(), standardized: standardize(&raw), raw }
    }
}

/// One feature vector per document in `doc_ids` order, from
/// `(doc_id, cluster)` pairs of its chains (or events).
pub fn build_feature_table(
    doc_ids: &[String],
    items: &[(String, usize)],
    k: usize,
) -> Result<Vec<ClusterFeatureVector>> {
    let mut per_doc: HashMap<&str, Vec<usize>> = HashMap::new();
    for (doc, c) in items {
        per_doc.entry(doc.as_str()).or_default().push(*c);
    }
    doc_ids
        .iter()
        .map(|d| {
            let raw = cluster_frequencies(per_doc.get(d.as_str()).map_or(&[][..], Vec::as_slice), k)?;
            Ok(ClusterFeatureVector::from_raw(d.clone(), raw))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    ClusterLr,
    LdaLr,
    EventTypeLr,
    TemplateLr,
    Random,
    Neural,
}

/// Logistic regression over document features, with its label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePredictor {
    pub kind: PredictorKind,
    pub labels: Vec<String>,
    pub model: LogisticRegression,
}

impl FramePredictor {
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.model.n_features {
            return Err(Error::DimensionMismatch { expected: self.model.n_features, got: x.len() });
        }
        Ok(self.model.predict_proba(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::nn::argmax(&self.predict_proba(x)?))
    }

    pub fn evaluate(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<Metrics> {
        let preds = xs.iter().map(|x| self.predict(x)).collect::<Result<Vec<_>>>()?;
        macro_metrics(&preds, ys, self.labels.len())
    }
}

/// Multinomial L2 logistic regression on document features.
pub fn train_frame_lr(
    kind: PredictorKind,
    xs: &[Vec<f64>],
    ys: &[usize],
    labels: &[String],
    config: &LogisticConfig,
) -> Result<FramePredictor> {
    let mut present: Vec<usize> = ys.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::Precondition("frame prediction needs at least two classes in training data".into()));
    }
    let model = LogisticRegression::fit(xs, ys, labels.len(), config)?;
    if !model.converged {
        log::warn!("{kind:?} logistic regression stopped after {} iterations without converging", model.iterations);
    }
    Ok(FramePredictor { kind, labels: labels.to_vec(), model })
}

/// Uniform random labels.
pub fn baseline_random(golds: &[usize], n_labels: usize, seed: u64) -> Result<Metrics> {
    let mut r = rng::seeded(seed);
    let preds: Vec<usize> = golds.iter().map(|_| r.random_range(0..n_labels.max(1))).collect();
    macro_metrics(&preds, golds, n_labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTypeFeatures {
    pub model: ClusterModel,
    /// Distinct `"verb object"` strings used to fit the clusters.
    pub event_texts: Vec<String>,
    pub train: Vec<ClusterFeatureVector>,
    pub test: Vec<ClusterFeatureVector>,
}

fn event_text(e: &EventMention) -> String {
    format!("{} {}", e.verb_lemma, e.object_lemma)
}

/// Event-type features: distinct `"v o"` texts of training documents are
/// embedded and clustered; every mention then counts towards its text's
/// cluster (nearest centroid for texts unseen in training), and documents
/// get the same standardized frequency vectors as chains do.
pub fn baseline_event_types(
    train_events: &[(String, Vec<EventMention>)],
    test_events: &[(String, Vec<EventMention>)],
    provider: &dyn EmbeddingProvider,
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<EventTypeFeatures> {
    let mut texts: BTreeMap<String, usize> = BTreeMap::new();
    for (_, evs) in train_events {
        for e in evs {
            texts.entry(event_text(e)).or_default();
        }
    }
    let event_texts: Vec<String> = texts.keys().cloned().collect();
    let vectors = embed_sentences(&event_texts, provider, 64)?;
    let model = kmeans(&vectors, k, seed, config)?;
    let mut cluster_of: HashMap<String, usize> =
        event_texts.iter().cloned().zip(model.assignments.iter().copied()).collect();

    let mut unseen: Vec<String> = test_events
        .iter()
        .flat_map(|(_, evs)| evs.iter().map(event_text))
        .filter(|t| !cluster_of.contains_key(t))
        .collect();
    unseen.sort();
    unseen.dedup();
    for (t, v) in unseen.iter().zip(embed_sentences(&unseen, provider, 64)?) {
        cluster_of.insert(t.clone(), model.assign(&v)?);
    }
    let table = |docs: &[(String, Vec<EventMention>)]| -> Result<Vec<ClusterFeatureVector>> {
        let ids: Vec<String> = docs.iter().map(|(d, _)| d.clone()).collect();
        let items: Vec<(String, usize)> =
            docs.iter().flat_map(|(d, evs)| evs.iter().map(|e| (d.clone(), cluster_of[&event_text(e)]))).collect();
        build_feature_table(&ids, &items, k)
    };
    Ok(EventTypeFeatures { train: table(train_events)?, test: table(test_events)?, event_texts, model })
}

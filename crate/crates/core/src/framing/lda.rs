//! Latent Dirichlet Allocation by collapsed Gibbs sampling, with optional
//! PMI term weighting.

use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub topics: usize,
    pub min_collection_freq: usize,
    pub min_doc_freq: usize,
    /// The most frequent words removed from the vocabulary.
    pub remove_top_words: usize,
    /// Gibbs sweeps over the corpus.
    pub min_iterations: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Weight each token by `max(0, ln p(w|d) / p(w))` instead of 1.
    pub pmi_weighting: bool,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            topics: 25,
            min_collection_freq: 3,
            min_doc_freq: 0,
            remove_top_words: 5,
            min_iterations: 1000,
            alpha: 0.1,
            beta: 0.01,
            pmi_weighting: false,
            seed: 42,
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub vocabulary: Vec<String>,
    pub removed_top_words: Vec<String>,
    /// Per document, topic proportions summing to 1.
    pub doc_topic: Vec<Vec<f64>>,
    /// Topic x word weighted counts.
    pub topic_word: Vec<Vec<f64>>,
    pub topic_totals: Vec<f64>,
    pub doc_totals: Vec<f64>,
    pub iterations: usize,
}

impl LdaModel {
    /// Topic totals agree with the summed token weights.
    pub fn counts_consistent(&self, tol: f64) -> bool {
        let tokens: f64 = self.doc_totals.iter().sum();
        let by_topic: f64 = self.topic_totals.iter().sum();
        let by_word: f64 = self.topic_word.iter().flatten().sum();
        (tokens - by_topic).abs() <= tol * tokens.max(1.0) && (tokens - by_word).abs() <= tol * tokens.max(1.0)
    }

    pub fn top_words(&self, topic: usize, n: usize) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.vocabulary.len()).collect();
        idx.sort_by(|&a, &b| self.topic_word[topic][b].total_cmp(&self.topic_word[topic][a]).then(a.cmp(&b)));
        idx.into_iter().take(n).map(|w| self.vocabulary[w].as_str()).collect()
    }
}

struct Vocab {
    words: Vec<String>,
    removed: Vec<String>,
    index: HashMap<String, usize>,
}

fn build_vocab(docs: &[Vec<String>], config: &LdaConfig) -> Vocab {
    let mut cf: BTreeMap<&str, usize> = BTreeMap::new();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        let mut seen: Vec<&str> = d.iter().map(String::as_str).collect();
        for w in &seen {
            *cf.entry(w).or_default() += 1;
        }
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *df.entry(w).or_default() += 1;
        }
    }
    let mut by_freq: Vec<(&str, usize)> = cf.iter().map(|(w, c)| (*w, *c)).collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let removed: Vec<String> = by_freq.iter().take(config.remove_top_words).map(|(w, _)| w.to_string()).collect();
    let words: Vec<String> = cf
        .iter()
        .filter(|(w, c)| {
            **c >= config.min_collection_freq && df[*w] >= config.min_doc_freq && !removed.iter().any(|r| r == *w)
        })
        .map(|(w, _)| w.to_string())
        .collect();
    let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Vocab { words, removed, index }
}

/// Fits topics to `texts` and returns per-document topic proportions.
pub fn gibbs_lda(texts: &[String], config: &LdaConfig) -> Result<LdaModel> {
    if config.topics == 0 || config.alpha <= 0.0 || config.beta <= 0.0 {
        return Err(Error::Precondition("LDA needs positive topics, alpha and beta".into()));
    }
    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let vocab = build_vocab(&tokenized, config);
    if vocab.words.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let docs: Vec<Vec<usize>> =
        tokenized.iter().map(|d| d.iter().filter_map(|w| vocab.index.get(w).copied()).collect()).collect();
    let weights = token_weights(&docs, vocab.words.len(), config.pmi_weighting);

    let (k, v) = (config.topics, vocab.words.len());
    let mut r = rng::seeded(config.seed);
    let mut z: Vec<Vec<usize>> = docs.iter().map(|d| d.iter().map(|_| r.random_range(0..k)).collect()).collect();
    let mut ndk = vec![vec![0.0; k]; docs.len()];
    let mut nkw = vec![vec![0.0; v]; k];
    let mut nk = vec![0.0; k];
    for (d, doc) in docs.iter().enumerate() {
        for (n, &w) in doc.iter().enumerate() {
            let (t, wt) = (z[d][n], weights[d][n]);
            ndk[d][t] += wt;
            nkw[t][w] += wt;
            nk[t] += wt;
        }
    }
    let vbeta = v as f64 * config.beta;
    let mut p = vec![0.0; k];
    for _ in 0..config.min_iterations {
        for (d, doc) in docs.iter().enumerate() {
            for (n, &w) in doc.iter().enumerate() {
                let (old, wt) = (z[d][n], weights[d][n]);
                if wt == 0.0 {
                    continue;
                }
                ndk[d][old] -= wt;
                nkw[old][w] -= wt;
                nk[old] -= wt;
                let mut total = 0.0;
                for t in 0..k {
                    total += (ndk[d][t] + config.alpha) * (nkw[t][w] + config.beta) / (nk[t] + vbeta);
                    p[t] = total;
                }
                let u = r.random_range(0.0..total);
                let new = p.iter().position(|&c| u < c).unwrap_or(k - 1);
                z[d][n] = new;
                ndk[d][new] += wt;
                nkw[new][w] += wt;
                nk[new] += wt;
            }
        }
    }
    let doc_totals: Vec<f64> = weights.iter().map(|w| w.iter().sum()).collect();
    let doc_topic = ndk
        .iter()
        .zip(&doc_totals)
        .map(|(row, &n)| row.iter().map(|c| (c.max(0.0) + config.alpha) / (n + k as f64 * config.alpha)).collect())
        .collect();
    Ok(LdaModel {
        vocabulary: vocab.words,
        removed_top_words: vocab.removed,
        doc_topic,
        topic_word: nkw,
        topic_totals: nk,
        doc_totals,
        iterations: config.min_iterations,
    })
}

fn token_weights(docs: &[Vec<usize>], v: usize, pmi: bool) -> Vec<Vec<f64>> {
    if !pmi {
        return docs.iter().map(|d| vec![1.0; d.len()]).collect();
    }
    let mut cf = vec![0.0; v];
    docs.iter().flatten().for_each(|&w| cf[w] += 1.0);
    let total: f64 = cf.iter().sum();
    docs.iter()
        .map(|d| {
            let mut tf: HashMap<usize, f64> = HashMap::new();
            d.iter().for_each(|&w| *tf.entry(w).or_default() += 1.0);
            let len = d.len() as f64;
            d.iter().map(|w| ((tf[w] / len) / (cf[*w] / total)).ln().max(0.0)).collect()
        })
        .collect()
}

//! Sentence embeddings of expanded chains and k-means over them.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::ExpandedChain;
use crate::providers::{embed_texts, EmbeddingProvider};
use crate::rng;
use crate::store::{Tensor, TensorFile};

pub const DEFAULT_KS: [usize; 8] = [25, 50, 75, 100, 125, 150, 175, 200];

pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One L2-normalised vector per expansion, in order. Each distinct sentence
/// is sent to the provider once.
pub fn embed_expansions(
    expansions: &[ExpandedChain],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    embed_sentences(&expansions.iter().map(|e| e.sentence.clone()).collect::<Vec<_>>(), provider, batch_size)
}

pub fn embed_sentences(
    sentences: &[String],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<String> = Vec::new();
    for s in sentences {
        slot.entry(s.as_str()).or_insert_with(|| {
            unique.push(s.clone());
            unique.len() - 1
        });
    }
    let mut vectors = embed_texts(provider, &unique, batch_size)?;
    vectors.iter_mut().for_each(|v| l2_normalize(v));
    Ok(sentences.iter().map(|s| vectors[slot[s.as_str()]].clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid movement.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iters: 300, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id per input vector.
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Index of the nearest centroid; the lower index wins ties.
pub fn nearest(centroids: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(centroids: &[Vec<f64>], vectors: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    vectors.par_iter().map(|v| nearest(centroids, v)).unzip()
}

impl ClusterModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn assign(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(nearest(&self.centroids, v).0)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.assignments.iter().for_each(|&a| s[a] += 1);
        s
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == cluster).collect()
    }

    /// Centroids as a tensor; assignments and the rest live in `meta`.
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut meta = serde_json::to_value(ClusterModel { centroids: Vec::new(), ..self.clone() }).unwrap_or_default();
        meta["kind"] = "cluster_model".into();
        let mut f = TensorFile::new(meta);
        f.push(Tensor::matrix("centroids", &self.centroids));
        f
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let mut meta = file.meta.clone();
        if meta["kind"] != "cluster_model" {
            return Err(Error::TensorFormat("not a cluster model".into()));
        }
        meta.as_object_mut().map(|m| m.remove("kind"));
        let mut model: ClusterModel = serde_json::from_value(meta)?;
        model.centroids = file.get("centroids")?.rows();
        if model.centroids.len() != model.k {
            return Err(Error::TensorFormat("centroid count differs from k".into()));
        }
        Ok(model)
    }
}

fn distinct_count(vectors: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = vectors.iter().map(|v| v.iter().map(|x| x.to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding: first centre uniform, later ones drawn with
/// probability proportional to squared distance from the nearest centre.
pub fn kmeans_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut rng::Rng) -> Result<Vec<usize>> {
    let n = vectors.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &vectors[chosen[0]])).collect();
    while chosen.len() < k {
        let dist = WeightedIndex::new(&d2).map_err(|_| Error::TooManyClusters { k, distinct: chosen.len() })?;
        let next = dist.sample(rng);
        chosen.push(next);
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &vectors[next]));
        }
    }
    Ok(chosen)
}

pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, config: &KMeansConfig) -> Result<ClusterModel> {
    let n = vectors.len();
    if k == 0 {
        return Err(Error::Precondition("k must be positive".into()));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let distinct = distinct_count(vectors);
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }
    let mut r = rng::seeded(seed);
    let mut centroids: Vec<Vec<f64>> =
        kmeans_plus_plus(vectors, k, &mut r)?.into_iter().map(|i| vectors[i].clone()).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let (labels, dists) = assign(&centroids, vectors);
        history.push(dists.iter().sum::<f64>());

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&labels) {
            counts[c] += 1;
            sums[c].iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| if c == 0 { old.clone() } else { s.into_iter().map(|x| x / c as f64).collect() })
            .collect();
        let mut taken = vec![false; n];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            // farthest point from its own centroid, not already used for repair
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .ok_or(Error::EmptyCluster(c))?;
            taken[far] = true;
            log::debug!("cluster {c} empty; moved to point {far}");
            next[c] = vectors[far].clone();
        }
        let shift = next.iter().zip(&centroids).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        if shift < config.tol {
            converged = true;
            break;
        }
    }
    let (assignments, dists) = assign(&centroids, vectors);
    let inertia = dists.iter().sum::<f64>();
    history.push(inertia);
    if history.windows(2).any(|w| w[1] > w[0] + 1e-9 * w[0].abs().max(1.0)) {
        log::warn!("k-means inertia increased between iterations (k = {k})");
    }
    Ok(ClusterModel { k, centroids, assignments, inertia, inertia_history: history, iterations, converged, seed })
}

/// One model per k, each seeded from `(seed, k)`. Failures stay per k.
pub fn sweep_k(
    vectors: &[Vec<f64>],
    ks: &[usize],
    seed: u64,
    config: &KMeansConfig,
) -> BTreeMap<usize, Result<ClusterModel>> {
    ks.iter().map(|&k| (k, kmeans(vectors, k, rng::derive(seed, k as u64), config))).collect()
}

/// Fits on the rows in `fit_rows` and assigns every row of `vectors` to its
/// nearest centroid. Inertia and its history refer to the fitted rows.
pub fn kmeans_fit_assign(
    vectors: &[Vec<f64>],
    fit_rows: &[usize],
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<ClusterModel> {
    let fit: Vec<Vec<f64>> = fit_rows.iter().map(|&i| vectors[i].clone()).collect();
    let mut model = kmeans(&fit, k, seed, config)?;
    if let Some(bad) = vectors.iter().find(|v| v.len() != model.dim()) {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: bad.len() });
    }
    model.assignments = assign(&model.centroids, vectors).0;
    Ok(model)
}

/// [`sweep_k`] restricted to fitting on `fit_rows`.
pub fn sweep_k_fit_assign(
    vectors: &[Vec<f64>],
    fit_rows: &[usize],
    ks: &[usize],
    seed: u64,
    config: &KMeansConfig,
) -> BTreeMap<usize, Result<ClusterModel>> {
    ks.iter().map(|&k| (k, kmeans_fit_assign(vectors, fit_rows, k, rng::derive(seed, k as u64), config))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCluster {
    pub cluster_id: usize,
    /// `(vector index, distance to centroid)`, nearest first.
    pub members: Vec<(usize, f64)>,
    /// Number of leading members in the top fraction.
    pub top_count: usize,
}

impl RankedCluster {
    pub fn top(&self) -> &[(usize, f64)] {
        &self.members[..self.top_count]
    }
}

pub fn rank_by_centroid_distance(
    model: &ClusterModel,
    vectors: &[Vec<f64>],
    cluster_id: usize,
    top_fraction: f64,
) -> Result<RankedCluster> {
    let centroid = model.centroids.get(cluster_id).ok_or(Error::EmptyCluster(cluster_id))?;
    let mut members: Vec<(usize, f64)> =
        model.members(cluster_id).into_iter().map(|i| (i, sq_dist(&vectors[i], centroid).sqrt())).collect();
    if members.is_empty() {
        return Err(Error::EmptyCluster(cluster_id));
    }
    members.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let top_count = ((members.len() as f64) * top_fraction).ceil().max(1.0) as usize;
    Ok(RankedCluster { cluster_id, top_count: top_count.min(members.len()), members })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len().min(b.len());
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        *table.entry((a[i], b[i])).or_default() += 1;
        *ra.entry(a[i]).or_default() += 1;
        *rb.entry(b[i]).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n).max(1.0);
    let max = (sa + sb) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

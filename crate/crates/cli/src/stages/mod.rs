//! Pipeline stages over an artifact directory.
//!
//! Every stage declares its upstream stages, external inputs and the slice
//! of configuration it depends on. A stage is skipped when its manifest
//! matches all three; an upstream manifest built under a different
//! configuration is refused.

mod frames;
mod narrative;
mod review;
mod text;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use narrative_core::clustering::ClusterModel;
use narrative_core::corpus::{Corpus, FrameLabelSet, Split};
use narrative_core::expansion::ExpandedChain;
use narrative_core::framing::ClusterFeatureVector;
use narrative_core::providers::{
    CachedEmbedder, DiskCache, EmbeddingProvider, GenerationProvider, HttpEmbedder, HttpGenerator, RetryPolicy,
    StubEmbedder, StubGenerator,
};
use narrative_core::store::{self, TensorFile};
use serde_json::{json, Value};

pub use frames::{baselines, train_frame_lr, train_frame_neural};
pub use narrative::{cluster, embed, expand_chains, featurize};
pub use review::{annotate, evaluate, intrusion_gen, intrusion_score, mi_report, read_annotations};
pub use text::{build_chains, build_relation_dataset, extract_events, ingest, train_relation_model};

use crate::config::{hash_value, EmbeddingSettings, GenerationSettings, PipelineConfig};
use crate::error::CliError;
use crate::workspace::{Freshness, Workspace};

/// Stages in pipeline order, with the stages whose artifacts they read.
pub const STAGES: [(&str, &[&str]); 17] = [
    ("ingest", &[]),
    ("extract-events", &["ingest"]),
    ("build-relation-dataset", &[]),
    ("train-relation-model", &["build-relation-dataset"]),
    ("build-chains", &["ingest", "extract-events", "train-relation-model"]),
    ("expand-chains", &["ingest", "build-chains"]),
    ("embed", &["ingest", "expand-chains"]),
    ("cluster", &["ingest", "expand-chains", "embed"]),
    ("featurize", &["ingest", "expand-chains", "cluster"]),
    ("train-frame-lr", &["ingest", "featurize"]),
    ("train-frame-neural", &["ingest", "embed", "featurize", "train-frame-lr"]),
    ("baselines", &["ingest", "extract-events", "build-chains"]),
    ("intrusion-gen", &["expand-chains", "embed", "cluster", "train-frame-lr"]),
    ("annotate", &["intrusion-gen"]),
    ("intrusion-score", &["intrusion-gen"]),
    ("mi-report", &["ingest", "expand-chains", "embed", "cluster", "featurize", "train-frame-lr"]),
    ("evaluate", &["build-relation-dataset"]),
];

pub fn upstream_of(stage: &str) -> &'static [&'static str] {
    STAGES.iter().find(|(s, _)| *s == stage).map_or(&[], |(_, u)| u)
}

/// The configuration a stage's artifacts depend on.
pub fn stage_config(cfg: &PipelineConfig, stage: &str) -> Value {
    let p = &cfg.providers;
    match stage {
        "ingest" => json!({"seed": cfg.seed, "corpus": cfg.corpus}),
        "extract-events" => json!(cfg.events),
        "build-relation-dataset" => json!(cfg.kg.distill),
        "train-relation-model" => json!({"relation": cfg.relation, "embedding": p.embedding}),
        "build-chains" => json!({"chains": cfg.chain_config(), "embedding": p.embedding, "batch": p.embed_batch_size}),
        "expand-chains" => json!({"expansion": cfg.expansion, "generation": p.generation}),
        "embed" => json!({"embedding": p.embedding}),
        "cluster" => json!({"seed": cfg.seed, "clustering": cfg.clustering}),
        "featurize" => json!({}),
        "train-frame-lr" => json!({"logistic": cfg.framing.logistic}),
        "train-frame-neural" => json!({"neural": cfg.neural, "k": cfg.framing.k}),
        "baselines" => json!({
            "seed": cfg.seed, "lda": cfg.lda, "clustering": cfg.clustering,
            "logistic": cfg.framing.logistic, "embedding": p.embedding,
        }),
        "intrusion-gen" => json!({"seed": cfg.seed, "k": cfg.framing.k, "items": cfg.intrusion.items,
            "top_fraction": cfg.intrusion.top_fraction}),
        "intrusion-score" => json!({"annotators": cfg.intrusion.annotators, "resolver": cfg.intrusion.resolver}),
        "mi-report" => json!({"mi": cfg.mi, "k": cfg.framing.k}),
        "evaluate" => json!({
            "seed": cfg.seed, "relation": cfg.relation, "evaluation": cfg.evaluation,
            "static_vectors": cfg.kg.static_vectors, "logistic": cfg.framing.logistic, "embedding": p.embedding,
        }),
        _ => Value::Null,
    }
}

pub fn stage_hash(cfg: &PipelineConfig, stage: &str) -> String {
    hash_value(&json!({"stage": stage, "config": stage_config(cfg, stage)}))
}

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub ws: Workspace,
    pub force: bool,
}

/// Artifact-relative file names.
pub mod files {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const EVENTS: &str = "events.jsonl";
    pub const RELATION_DATASET: &str = "relation_dataset.jsonl";
    pub const RELATION_MODEL: &str = "relation_model.tensors";
    pub const CHAINS: &str = "chains.jsonl";
    pub const EXPANSIONS: &str = "expansions.jsonl";
    pub const EMBEDDINGS: &str = "embeddings.tensors";
    pub const CLUSTERS: &str = "clusters.json";
    pub const FRAME_LR: &str = "frame_lr.json";
    pub const FRAME_NEURAL: &str = "frame_neural.json";
    pub const BASELINES: &str = "baselines.json";
    pub const INTRUSION_ITEMS: &str = "intrusion/items.jsonl";
    pub const INTRUSION_BLINDED: &str = "intrusion/blinded.jsonl";
    pub const ANNOTATIONS: &str = "annotations";
    pub const INTRUSION_SCORE: &str = "intrusion_score.json";
    pub const MI_REPORT: &str = "mi_report.json";
    pub const MI_MARKDOWN: &str = "mi_report.md";
    pub const EVALUATION: &str = "evaluation.json";
    pub const REPORT: &str = "report.md";
    pub const REPORT_JSON: &str = "report.json";

    pub fn cluster_model(k: usize) -> String {
        format!("clusters/k{k}.tensors")
    }

    pub fn features(k: usize) -> String {
        format!("features/k{k}.jsonl")
    }
}

/// What a stage body produced.
pub struct StageOutput {
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

impl Ctx {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.ws.path(rel)
    }

    /// Runs `body` unless the stage is up to date.
    pub fn run_stage(
        &self,
        stage: &str,
        external: Vec<PathBuf>,
        body: impl FnOnce(&Ctx) -> Result<StageOutput>,
    ) -> Result<Value> {
        let mut inputs = BTreeMap::new();
        for up in upstream_of(stage) {
            let m = self.ws.require(up, &stage_hash(&self.cfg, up))?;
            inputs.extend(m.outputs);
        }
        inputs.extend(self.ws.hash_files(&external)?);
        let hash = stage_hash(&self.cfg, stage);
        if !self.force {
            if let Freshness::UpToDate(m) = self.ws.freshness(stage, &hash, &inputs) {
                println!("{stage}: up to date");
                return Ok(m.summary);
            }
        }
        let started = Workspace::clock();
        let out = body(self).with_context(|| format!("stage `{stage}` failed"))?;
        self.ws.record(stage, &hash, inputs, &out.files, started, out.summary.clone())?;
        println!("{stage}: done");
        print_summary(&out.summary);
        Ok(out.summary)
    }

    pub fn labels(&self) -> Result<FrameLabelSet> {
        Ok(FrameLabelSet::new(self.cfg.corpus.labels.clone())?)
    }

    pub fn corpus(&self) -> Result<Corpus> {
        Ok(Corpus::load_saved(&self.path(files::CORPUS), self.labels()?)?)
    }

    pub fn expansions(&self) -> Result<Vec<ExpandedChain>> {
        Ok(store::read_jsonl(&self.path(files::EXPANSIONS))?)
    }

    pub fn embeddings(&self) -> Result<Embeddings> {
        let f = TensorFile::read(&self.path(files::EMBEDDINGS))?;
        let documents: Vec<String> = serde_json::from_value(f.meta["documents"].clone())?;
        Ok(Embeddings { expansions: f.get("expansions")?.rows(), documents, doc_vectors: f.get("documents")?.rows() })
    }

    /// Successfully clustered ks, ascending.
    pub fn cluster_ks(&self) -> Result<Vec<usize>> {
        let sweep: BTreeMap<usize, Value> = store::read_json(&self.path(files::CLUSTERS))?;
        Ok(sweep.into_iter().filter(|(_, v)| v.get("error").is_none()).map(|(k, _)| k).collect())
    }

    pub fn cluster_model(&self, k: usize) -> Result<ClusterModel> {
        let path = self.path(&files::cluster_model(k));
        if !path.exists() {
            return Err(
                CliError::Data(format!("no cluster model for k = {k}; available: {:?}", self.cluster_ks()?)).into()
            );
        }
        Ok(ClusterModel::from_tensor_file(&TensorFile::read(&path)?)?)
    }

    pub fn features(&self, k: usize) -> Result<Vec<ClusterFeatureVector>> {
        Ok(store::read_jsonl(&self.path(&files::features(k)))?)
    }

    /// Configured k, else the best k of the cluster-feature regression.
    pub fn selected_k(&self) -> Result<usize> {
        if let Some(k) = self.cfg.framing.k {
            return Ok(k);
        }
        let lr: Value = store::read_json(&self.path(files::FRAME_LR))?;
        lr["best_k"]
            .as_u64()
            .map(|k| k as usize)
            .ok_or_else(|| CliError::Data("frame_lr.json has no best_k".into()).into())
    }

    pub fn embedder(&self) -> Box<dyn EmbeddingProvider> {
        match &self.cfg.providers.embedding {
            EmbeddingSettings::Stub { dim, seed } => Box::new(StubEmbedder::new(*dim, *seed)),
            EmbeddingSettings::Http { endpoint, model, max_in_flight, timeout_secs, max_attempts } => {
                let http = HttpEmbedder::with_options(
                    endpoint,
                    model,
                    RetryPolicy { max_attempts: *max_attempts, ..RetryPolicy::default() },
                    *max_in_flight,
                    Duration::from_secs(*timeout_secs),
                );
                if self.cfg.providers.cache {
                    Box::new(CachedEmbedder::new(http, DiskCache::new(self.path("cache/embeddings"))))
                } else {
                    Box::new(http)
                }
            }
        }
    }

    pub fn generator(&self) -> (Box<dyn GenerationProvider>, RetryPolicy, Option<DiskCache>) {
        match &self.cfg.providers.generation {
            GenerationSettings::Stub => (Box::new(StubGenerator), RetryPolicy::no_delay(1), None),
            GenerationSettings::Http { endpoint, model, max_in_flight, timeout_secs, max_attempts } => {
                // retries happen in the expansion loop, so the client itself tries once
                let http = HttpGenerator::with_options(
                    endpoint,
                    model,
                    RetryPolicy::no_delay(1),
                    *max_in_flight,
                    Duration::from_secs(*timeout_secs),
                );
                let cache = self.cfg.providers.cache.then(|| DiskCache::new(self.path("cache/generation")));
                (Box::new(http), RetryPolicy { max_attempts: *max_attempts, ..RetryPolicy::default() }, cache)
            }
        }
    }
}

pub struct Embeddings {
    pub expansions: Vec<Vec<f64>>,
    pub documents: Vec<String>,
    pub doc_vectors: Vec<Vec<f64>>,
}

/// Labeled documents of one split as `(doc_id, class id)`.
pub fn labeled(corpus: &Corpus, split: Split) -> Vec<(String, usize)> {
    corpus
        .documents()
        .iter()
        .filter(|d| d.split == split)
        .filter_map(|d| corpus.label_id(d).map(|y| (d.id.clone(), y)))
        .collect()
}

fn print_summary(summary: &Value) {
    if let Value::Object(map) = summary {
        for (k, v) in map {
            let shown = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if shown.len() <= 160 {
                println!("  {k}: {shown}");
            }
        }
    }
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

use std::collections::{BTreeMap, HashMap};

use anyhow::Result;
use narrative_core::chains::NarrativeChain;
use narrative_core::clustering::{embed_sentences, kmeans};
use narrative_core::corpus::Split;
use narrative_core::evaluation::Metrics;
use narrative_core::events::EventMention;
use narrative_core::expansion::expand_template;
use narrative_core::framing::{
    self, baseline_event_types, build_feature_table, gibbs_lda, train_frame_lr as fit_lr, ClusterFeatureVector,
    HeadData, HeadInput, LdaConfig, PredictorKind,
};
use narrative_core::nn::LogisticConfig;
use narrative_core::{rng, store};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::text::load_events;
use super::{files, labeled, Ctx, StageOutput};
use crate::error::CliError;

/// Features and class ids for `docs`, in order.
fn xy(features: &HashMap<String, Vec<f64>>, docs: &[(String, usize)]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(docs.len());
    for (id, _) in docs {
        xs.push(features.get(id).cloned().ok_or_else(|| CliError::Data(format!("no features for document {id}")))?);
    }
    Ok((xs, docs.iter().map(|(_, y)| *y).collect()))
}

fn by_doc(table: &[ClusterFeatureVector]) -> HashMap<String, Vec<f64>> {
    table.iter().map(|f| (f.doc_id.clone(), f.standardized.clone())).collect()
}

struct Splits {
    train: Vec<(String, usize)>,
    test: Vec<(String, usize)>,
    labels: Vec<String>,
}

fn splits(ctx: &Ctx) -> Result<Splits> {
    let corpus = ctx.corpus()?;
    let train = labeled(&corpus, Split::Train);
    let test = labeled(&corpus, Split::Test);
    if train.is_empty() || test.is_empty() {
        return Err(
            CliError::Data("frame prediction needs labeled documents in both train and test splits".into()).into()
        );
    }
    Ok(Splits { train, test, labels: corpus.labels.labels().to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrResult {
    pub train: Metrics,
    pub test: Metrics,
}

fn fit_and_score(
    kind: PredictorKind,
    features: &HashMap<String, Vec<f64>>,
    s: &Splits,
    config: &LogisticConfig,
) -> Result<(framing::FramePredictor, LrResult)> {
    let (tx, ty) = xy(features, &s.train)?;
    let (vx, vy) = xy(features, &s.test)?;
    let model = fit_lr(kind, &tx, &ty, &s.labels, config)?;
    let result = LrResult { train: model.evaluate(&tx, &ty)?, test: model.evaluate(&vx, &vy)? };
    Ok((model, result))
}

pub fn train_frame_lr(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("train-frame-lr", vec![], |ctx| {
        let s = splits(ctx)?;
        let mut per_k = BTreeMap::new();
        let mut models = BTreeMap::new();
        for k in ctx.cluster_ks()? {
            let (model, result) =
                fit_and_score(PredictorKind::ClusterLr, &by_doc(&ctx.features(k)?), &s, &ctx.cfg.framing.logistic)?;
            per_k.insert(k, result);
            models.insert(k, model);
        }
        // highest test macro-F1; the smaller k wins ties
        let best_k = per_k
            .iter()
            .fold(None::<(usize, f64)>, |best, (&k, r)| match best {
                Some((_, f)) if f >= r.test.macro_f1 => best,
                _ => Some((k, r.test.macro_f1)),
            })
            .map(|(k, _)| k)
            .ok_or_else(|| CliError::Data("no cluster features to train on".into()))?;
        let out = ctx.path(files::FRAME_LR);
        store::write_json(&out, &json!({"labels": s.labels, "per_k": per_k, "best_k": best_k}))?;
        let model_path = ctx.path("frame_lr_models.json");
        store::write_json(&model_path, &models)?;
        let f1: BTreeMap<usize, f64> = per_k.iter().map(|(k, r)| (*k, r.test.macro_f1)).collect();
        Ok(StageOutput {
            files: vec![out, model_path],
            summary: json!({"best_k": best_k, "test_macro_f1": f1, "train_docs": s.train.len(), "test_docs": s.test.len()}),
        })
    })
}

pub fn train_frame_neural(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("train-frame-neural", vec![], |ctx| {
        let s = splits(ctx)?;
        let k = ctx.selected_k()?;
        let features = by_doc(&ctx.features(k)?);
        let emb = ctx.embeddings()?;
        let doc_vec: HashMap<&str, &Vec<f64>> =
            emb.documents.iter().map(String::as_str).zip(&emb.doc_vectors).collect();
        let vectors = |docs: &[(String, usize)]| -> Result<Vec<Vec<f64>>> {
            docs.iter()
                .map(|(id, _)| {
                    doc_vec
                        .get(id.as_str())
                        .map(|v| (*v).clone())
                        .ok_or_else(|| CliError::Data(format!("no embedding for document {id}")).into())
                })
                .collect()
        };
        let (train_features, train_labels) = xy(&features, &s.train)?;
        let (test_features, test_labels) = xy(&features, &s.test)?;
        let data = HeadData {
            train_embeddings: vectors(&s.train)?,
            train_features,
            train_labels,
            test_embeddings: vectors(&s.test)?,
            test_features,
            test_labels,
        };
        let n = s.labels.len();
        let fusion = framing::train_neural_head(&data, n, HeadInput::Fusion, &ctx.cfg.neural)?;
        let text_only = framing::train_neural_head(&data, n, HeadInput::EmbeddingOnly, &ctx.cfg.neural)?;
        let out = ctx.path(files::FRAME_NEURAL);
        store::write_json(&out, &json!({"k": k, "fusion": fusion, "embedding_only": text_only}))?;
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "k": k,
                "fusion_accuracy": fusion.accuracy.mean,
                "fusion_macro_f1": fusion.macro_f1.mean,
                "embedding_only_accuracy": text_only.accuracy.mean,
                "embedding_only_macro_f1": text_only.macro_f1.mean,
            }),
        })
    })
}

/// Test metrics of one baseline at one k, or why it could not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Outcome {
    fn from(r: Result<Metrics>) -> Self {
        match r {
            Ok(m) => Outcome { metrics: Some(m), error: None },
            Err(e) => {
                log::warn!("baseline skipped: {e:#}");
                Outcome { metrics: None, error: Some(format!("{e:#}")) }
            }
        }
    }
}

pub fn baselines(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("baselines", vec![], |ctx| {
        let cfg = &ctx.cfg;
        let s = splits(ctx)?;
        let corpus = ctx.corpus()?;
        let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
        let events = load_events(ctx, &ids)?;
        let chains: Vec<NarrativeChain> = store::read_jsonl(&ctx.path(files::CHAINS))?;
        let provider = ctx.embedder();
        let batch = cfg.providers.embed_batch_size;
        let logistic = &cfg.framing.logistic;
        let score = |kind, features: &HashMap<String, Vec<f64>>| -> Result<Metrics> {
            Ok(fit_and_score(kind, features, &s, logistic)?.1.test)
        };

        let test_golds: Vec<usize> = s.test.iter().map(|(_, y)| *y).collect();
        let random = framing::baseline_random(&test_golds, s.labels.len(), cfg.seed)?;

        let lda_docs: Vec<(String, usize)> = s.train.iter().chain(&s.test).cloned().collect();
        let lda_texts: Vec<String> =
            lda_docs.iter().map(|(id, _)| corpus.get(id).map(|d| d.text.clone()).unwrap_or_default()).collect();

        let doc_events = |docs: &[(String, usize)]| -> Vec<(String, Vec<EventMention>)> {
            docs.iter().map(|(id, _)| (id.clone(), events.for_doc(id).unwrap_or_default().to_vec())).collect()
        };
        let (train_events, test_events) = (doc_events(&s.train), doc_events(&s.test));

        let template: Vec<String> = chains.iter().map(|c| expand_template(c).sentence).collect();
        let template_vectors =
            if template.is_empty() { Vec::new() } else { embed_sentences(&template, provider.as_ref(), batch)? };

        let mut per_k = BTreeMap::new();
        for &k in &cfg.clustering.ks {
            let lda = Outcome::from((|| {
                let model = gibbs_lda(&lda_texts, &LdaConfig { topics: k, ..cfg.lda.clone() })?;
                let features = lda_docs.iter().map(|(id, _)| id.clone()).zip(model.doc_topic).collect();
                score(PredictorKind::LdaLr, &features)
            })());
            let event_types = Outcome::from((|| {
                let f = baseline_event_types(
                    &train_events,
                    &test_events,
                    provider.as_ref(),
                    k,
                    rng::derive(cfg.seed, k as u64),
                    &cfg.clustering.kmeans(),
                )?;
                let features =
                    f.train.iter().chain(&f.test).map(|v| (v.doc_id.clone(), v.standardized.clone())).collect();
                score(PredictorKind::EventTypeLr, &features)
            })());
            let templated = Outcome::from((|| {
                let model = kmeans(&template_vectors, k, rng::derive(cfg.seed, k as u64), &cfg.clustering.kmeans())?;
                let items: Vec<(String, usize)> =
                    chains.iter().zip(&model.assignments).map(|(c, &a)| (c.doc_id.clone(), a)).collect();
                score(PredictorKind::TemplateLr, &by_doc(&build_feature_table(&ids, &items, k)?))
            })());
            per_k.insert(k, json!({"lda": lda, "event_types": event_types, "template": templated}));
        }
        let out = ctx.path(files::BASELINES);
        store::write_json(&out, &json!({"random": random, "per_k": per_k}))?;
        let f1 = |name: &str| -> BTreeMap<usize, Value> {
            per_k.iter().map(|(k, v)| (*k, v[name]["metrics"]["macro_f1"].clone())).collect()
        };
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "random_macro_f1": random.macro_f1,
                "lda_macro_f1": f1("lda"),
                "event_types_macro_f1": f1("event_types"),
                "template_macro_f1": f1("template"),
            }),
        })
    })
}

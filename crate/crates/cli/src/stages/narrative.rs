use std::collections::BTreeMap;

use anyhow::Result;
use narrative_core::chains::NarrativeChain;
use narrative_core::clustering::{embed_expansions, embed_sentences, sweep_k_fit_assign};
use narrative_core::corpus::Split;
use narrative_core::expansion::{expand_batch, ExpansionConfig, ExpansionMethod};
use narrative_core::framing::build_feature_table;
use narrative_core::store::{self, Tensor, TensorFile};
use serde_json::{json, Value};

use super::{ensure_parent, files, Ctx, StageOutput};
use crate::config::ExpansionKind;
use crate::error::CliError;

pub fn expand_chains(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("expand-chains", vec![], |ctx| {
        let corpus = ctx.corpus()?;
        let chains: Vec<NarrativeChain> = store::read_jsonl(&ctx.path(files::CHAINS))?;
        let (generator, retry, cache) = ctx.generator();
        let e = &ctx.cfg.expansion;
        let config = ExpansionConfig {
            method: match e.method {
                ExpansionKind::Llm => ExpansionMethod::Llm,
                ExpansionKind::Template => ExpansionMethod::Template,
            },
            parallelism: e.parallelism,
            retry,
            max_tokens: e.max_tokens,
            temperature: e.temperature,
        };
        let run = expand_batch(&chains, &corpus, Some(generator.as_ref()), cache.as_ref(), &config)?;
        if !chains.is_empty() && run.expansions.is_empty() {
            let first = run.failures.first().map_or(String::new(), |f| f.error.clone());
            return Err(CliError::Provider(format!("every chain expansion failed; first error: {first}")).into());
        }
        let out = ctx.path(files::EXPANSIONS);
        store::write_jsonl(&out, &run.expansions)?;
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "chains": chains.len(),
                "expanded": run.expansions.len(),
                "failed": run.failures.len(),
                "failures": run.failures,
                "provider_calls": run.provider_calls,
                "cache_hits": run.cache_hits,
            }),
        })
    })
}

pub fn embed(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("embed", vec![], |ctx| {
        let corpus = ctx.corpus()?;
        let expansions = ctx.expansions()?;
        if expansions.is_empty() {
            return Err(CliError::Data("no chain expansions to embed".into()).into());
        }
        let provider = ctx.embedder();
        let batch = ctx.cfg.providers.embed_batch_size;
        let vectors = embed_expansions(&expansions, provider.as_ref(), batch)?;
        let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
        let texts: Vec<String> = corpus.documents().iter().map(|d| d.text.clone()).collect();
        let doc_vectors = embed_sentences(&texts, provider.as_ref(), batch)?;
        let mut file = TensorFile::new(json!({"kind": "embeddings", "model": provider.model_id(), "documents": ids}));
        file.push(Tensor::matrix("expansions", &vectors)).push(Tensor::matrix("documents", &doc_vectors));
        let out = ctx.path(files::EMBEDDINGS);
        file.write(&out)?;
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "expansions": vectors.len(),
                "documents": doc_vectors.len(),
                "dim": vectors[0].len(),
                "model": provider.model_id(),
            }),
        })
    })
}

pub fn cluster(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("cluster", vec![], |ctx| {
        let vectors = ctx.embeddings()?.expansions;
        let corpus = ctx.corpus()?;
        let expansions = ctx.expansions()?;
        if expansions.len() != vectors.len() {
            return Err(CliError::Data(format!(
                "{} expansion vectors but {} expansions; rerun `narrative embed`",
                vectors.len(),
                expansions.len()
            ))
            .into());
        }
        let fit_rows: Vec<usize> = expansions
            .iter()
            .enumerate()
            .filter(|(_, e)| corpus.get(&e.chain.doc_id).is_some_and(|d| d.split == Split::Train))
            .map(|(i, _)| i)
            .collect();
        if fit_rows.is_empty() {
            return Err(CliError::Data("no training-split chains to cluster".into()).into());
        }
        let c = &ctx.cfg.clustering;
        let mut table = BTreeMap::new();
        let mut outputs = Vec::new();
        for (k, result) in sweep_k_fit_assign(&vectors, &fit_rows, &c.ks, ctx.cfg.seed, &c.kmeans()) {
            match result {
                Ok(model) => {
                    let path = ctx.path(&files::cluster_model(k));
                    ensure_parent(&path)?;
                    model.to_tensor_file().write(&path)?;
                    outputs.push(path);
                    table.insert(
                        k,
                        json!({
                            "inertia": model.inertia,
                            "iterations": model.iterations,
                            "converged": model.converged,
                            "sizes": model.sizes(),
                        }),
                    );
                }
                Err(e) => {
                    log::warn!("k = {k}: {e}");
                    table.insert(k, json!({"error": e.to_string()}));
                }
            }
        }
        if outputs.is_empty() {
            return Err(CliError::Data(format!("clustering failed for every k in {:?}", c.ks)).into());
        }
        let sweep = ctx.path(files::CLUSTERS);
        store::write_json(&sweep, &table)?;
        outputs.push(sweep);
        let inertia: BTreeMap<usize, Value> =
            table.iter().map(|(k, v)| (*k, v.get("inertia").cloned().unwrap_or(Value::Null))).collect();
        Ok(StageOutput {
            files: outputs,
            summary: json!({"points": vectors.len(), "fit_points": fit_rows.len(), "inertia": inertia}),
        })
    })
}

pub fn featurize(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("featurize", vec![], |ctx| {
        let corpus = ctx.corpus()?;
        let expansions = ctx.expansions()?;
        let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
        let mut outputs = Vec::new();
        let mut ks = Vec::new();
        for k in ctx.cluster_ks()? {
            let model = ctx.cluster_model(k)?;
            if model.assignments.len() != expansions.len() {
                return Err(CliError::Data(format!(
                    "cluster model k = {k} covers {} chains but {} expansions exist",
                    model.assignments.len(),
                    expansions.len()
                ))
                .into());
            }
            let items: Vec<(String, usize)> =
                expansions.iter().zip(&model.assignments).map(|(e, &c)| (e.chain.doc_id.clone(), c)).collect();
            let table = build_feature_table(&ids, &items, k)?;
            let path = ctx.path(&files::features(k));
            ensure_parent(&path)?;
            store::write_jsonl(&path, &table)?;
            outputs.push(path);
            ks.push(k);
        }
        let with_chains: std::collections::HashSet<&str> = expansions.iter().map(|e| e.chain.doc_id.as_str()).collect();
        Ok(StageOutput {
            files: outputs,
            summary: json!({
                "ks": ks,
                "documents": ids.len(),
                "documents_without_chains": ids.iter().filter(|d| !with_chains.contains(d.as_str())).count(),
            }),
        })
    })
}

use anyhow::Result;
use narrative_core::chains::{build_corpus_chains, NeuralPairClassifier};
use narrative_core::corpus::{load_corpus, load_parses, split_corpus, Split};
use narrative_core::events::{extract_corpus_events, EventMention, EventTable};
use narrative_core::kg_distill::{build_dataset, read_edges, PhraseParses, RelationDataset, RelationExample};
use narrative_core::relation_model::{self, RelationClassifier};
use narrative_core::store;
use serde_json::{json, Value};

use super::{files, Ctx, StageOutput};
use crate::error::CliError;

pub fn ingest(ctx: &Ctx) -> Result<Value> {
    let c = &ctx.cfg.corpus;
    ctx.run_stage("ingest", vec![c.path.clone(), c.parses.clone()], |ctx| {
        let corpus = load_corpus(&c.path, ctx.labels()?)?;
        let (corpus, parse_report) = load_parses(corpus, &c.parses)?;
        let splits: Vec<Split> = corpus.documents().iter().map(|d| d.split).collect();
        let corpus = if splits.iter().all(|s| *s == Split::Unassigned) {
            split_corpus(corpus, c.test_fraction, ctx.cfg.seed)?
        } else if splits.contains(&Split::Unassigned) {
            return Err(CliError::Data("corpus mixes documents with and without a split".into()).into());
        } else {
            corpus
        };
        let unparsed: Vec<&str> =
            corpus.documents().iter().filter(|d| d.sentences.is_empty()).map(|d| d.id.as_str()).collect();
        if !unparsed.is_empty() {
            return Err(CliError::Data(format!("documents without parses: {}", unparsed.join(", "))).into());
        }
        let out = ctx.path(files::CORPUS);
        corpus.save(&out)?;
        Ok(StageOutput { files: vec![out], summary: json!({"corpus": corpus.summary(), "parses": parse_report}) })
    })
}

pub fn load_events(ctx: &Ctx, doc_ids: &[String]) -> Result<EventTable> {
    let records: Vec<EventMention> = store::read_jsonl(&ctx.path(files::EVENTS))?;
    Ok(EventTable::from_records(doc_ids, records))
}

pub fn extract_events(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("extract-events", vec![], |ctx| {
        let corpus = ctx.corpus()?;
        let table = extract_corpus_events(&corpus, ctx.cfg.events.salience_keep_fraction)?;
        let out = ctx.path(files::EVENTS);
        store::write_jsonl(&out, &table.records())?;
        let without: usize = table.documents.iter().filter(|d| d.mentions.is_empty()).count();
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "documents": table.documents.len(),
                "mentions": table.total_mentions,
                "unique_events": table.unique_events,
                "documents_without_events": without,
            }),
        })
    })
}

pub fn load_dataset(ctx: &Ctx) -> Result<RelationDataset> {
    let examples: Vec<RelationExample> = store::read_jsonl(&ctx.path(files::RELATION_DATASET))?;
    Ok(RelationDataset::new(examples))
}

fn class_counts(ds: &RelationDataset) -> Value {
    json!(ds.class_counts.iter().map(|(l, n)| (l.name(), n)).collect::<std::collections::BTreeMap<_, _>>())
}

pub fn build_relation_dataset(ctx: &Ctx) -> Result<Value> {
    let kg = &ctx.cfg.kg;
    ctx.run_stage("build-relation-dataset", vec![kg.edges.clone(), kg.phrase_parses.clone()], |ctx| {
        let parses = PhraseParses::load(&kg.phrase_parses)?;
        let (ds, stats) = build_dataset(|| read_edges(&kg.edges), &parses, &ctx.cfg.kg.distill)?;
        if ds.is_empty() {
            return Err(CliError::Data("the knowledge graph yielded no relation examples".into()).into());
        }
        let out = ctx.path(files::RELATION_DATASET);
        store::write_jsonl(&out, &ds.examples)?;
        Ok(StageOutput {
            files: vec![out],
            summary: json!({"examples": ds.len(), "class_counts": class_counts(&ds), "stats": stats}),
        })
    })
}

pub fn train_relation_model(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("train-relation-model", vec![], |ctx| {
        let ds = load_dataset(ctx)?;
        let provider = ctx.embedder();
        let (model, report) = relation_model::train(&ds, &ctx.cfg.relation, provider.as_ref())?;
        let out = ctx.path(files::RELATION_MODEL);
        model.save(&out)?;
        let report_path = ctx.path("relation_train.json");
        store::write_json(&report_path, &report)?;
        Ok(StageOutput {
            files: vec![out, report_path],
            summary: json!({
                "examples": ds.len(),
                "epochs_run": report.epochs_run,
                "best_epoch": report.best_epoch,
                "validation_macro_f1": report.validation.macro_f1,
                "validation_accuracy": report.validation.accuracy,
            }),
        })
    })
}

pub fn build_chains(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("build-chains", vec![], |ctx| {
        let corpus = ctx.corpus()?;
        let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
        let events = load_events(ctx, &ids)?;
        let model = RelationClassifier::load(&ctx.path(files::RELATION_MODEL))?;
        let provider = ctx.embedder();
        let classifier = NeuralPairClassifier {
            model: &model,
            provider: provider.as_ref(),
            batch_size: ctx.cfg.providers.embed_batch_size,
        };
        let run = build_corpus_chains(&corpus, &events, &classifier, &ctx.cfg.chain_config())?;
        let with_events = events.documents.iter().filter(|d| !d.mentions.is_empty()).count();
        if with_events > 0 && run.skipped_documents.len() == with_events {
            return Err(CliError::Provider("the embedding provider failed for every document".into()).into());
        }
        let out = ctx.path(files::CHAINS);
        store::write_jsonl(&out, &run.chains)?;
        let mut by_relation = std::collections::BTreeMap::new();
        for c in &run.chains {
            *by_relation.entry(c.relation.name()).or_insert(0usize) += 1;
        }
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "chains": run.chains.len(),
                "candidates": run.candidates,
                "duplicates_removed": run.duplicates_removed,
                "per_document": run.per_document_mean(corpus.len()),
                "by_relation": by_relation,
                "skipped_documents": run.skipped_documents,
            }),
        })
    })
}

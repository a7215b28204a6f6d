use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{Context, Result};
use narrative_core::clustering::rank_by_centroid_distance;
use narrative_core::evaluation::{
    intrusion_generate, intrusion_score as score_items, mutual_information, top_clusters_per_frame, AnnotationMatrix,
    BlindedItem, IntrusionItem, CANDIDATES,
};
use narrative_core::kg_distill::RelationDataset;
use narrative_core::providers::StaticVectorTable;
use narrative_core::relation_model::{
    self, baseline_majority, baseline_random, baseline_static_lr, stratified_folds, CvSummary, N_CLASSES,
};
use narrative_core::{rng, store};
use serde_json::{json, Value};

use super::text::load_dataset;
use super::{ensure_parent, files, stage_hash, Ctx, StageOutput};
use crate::error::CliError;

const INTRUSION_STREAM: u64 = 0x1a7;

pub fn intrusion_gen(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("intrusion-gen", vec![], |ctx| {
        let k = ctx.selected_k()?;
        let model = ctx.cluster_model(k)?;
        let vectors = ctx.embeddings()?.expansions;
        let sentences: Vec<String> = ctx.expansions()?.into_iter().map(|e| e.sentence).collect();
        let c = &ctx.cfg.intrusion;
        let items = intrusion_generate(
            &model,
            &vectors,
            &sentences,
            c.items,
            c.top_fraction,
            rng::derive(ctx.cfg.seed, INTRUSION_STREAM),
        )?;
        let sealed = ctx.path(files::INTRUSION_ITEMS);
        let blinded = ctx.path(files::INTRUSION_BLINDED);
        store::write_jsonl(&sealed, &items)?;
        store::write_jsonl(&blinded, &items.iter().map(IntrusionItem::blinded).collect::<Vec<_>>())?;
        Ok(StageOutput { files: vec![sealed, blinded], summary: json!({"k": k, "items": items.len()}) })
    })
}

fn annotation_path(ctx: &Ctx, annotator: &str) -> std::path::PathBuf {
    ctx.path(&format!("{}/{annotator}.tsv", files::ANNOTATIONS))
}

/// Reads an annotation file into `item_id -> candidate position` (0-based;
/// the file stores 1-based choices).
pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, usize>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::Data(format!("{}:{}: expected `item_id<TAB>choice`", path.display(), i + 1));
        let (id, choice) = line.split_once('\t').ok_or_else(bad)?;
        let choice: usize = choice.trim().parse().map_err(|_| bad())?;
        if !(1..=CANDIDATES).contains(&choice) {
            return Err(bad().into());
        }
        out.insert(id.to_string(), choice - 1);
    }
    Ok(out)
}

/// Interactive loop over `items`, appending to the annotation file at `path`.
/// Items already in the file are skipped; `q` or end of input stops early.
/// Returns the number of items annotated in this session.
pub fn annotate_session<R: BufRead, W: Write>(
    items: &[BlindedItem],
    path: &Path,
    mut input: R,
    mut out: W,
) -> Result<usize> {
    let done = if path.exists() { read_annotations(path)? } else { BTreeMap::new() };
    ensure_parent(path)?;
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if done.is_empty() && file.metadata()?.len() == 0 {
        writeln!(file, "item_id\tchoice")?;
    }
    let pending: Vec<&BlindedItem> = items.iter().filter(|i| !done.contains_key(&i.item_id)).collect();
    writeln!(
        out,
        "{} of {} items left. Pick the sentence that does not belong (1-{CANDIDATES}), q to stop.",
        pending.len(),
        items.len()
    )?;
    let mut count = 0;
    'items: for (n, item) in pending.iter().enumerate() {
        writeln!(out, "\n[{}/{}] {}", n + 1, pending.len(), item.item_id)?;
        for (i, c) in item.candidates.iter().enumerate() {
            writeln!(out, "  {}. {c}", i + 1)?;
        }
        loop {
            write!(out, "> ")?;
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                break 'items;
            }
            match line.trim() {
                "q" | "quit" => break 'items,
                s => match s.parse::<usize>() {
                    Ok(c) if (1..=item.candidates.len()).contains(&c) => {
                        writeln!(file, "{}\t{c}", item.item_id)?;
                        count += 1;
                        break;
                    }
                    _ => writeln!(out, "enter a number from 1 to {}, or q", item.candidates.len())?,
                },
            }
        }
    }
    file.flush()?;
    writeln!(out, "saved {count} answers to {}", path.display())?;
    Ok(count)
}

fn valid_annotator(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Annotation reads only the blinded export.
pub fn annotate<R: BufRead, W: Write>(ctx: &Ctx, annotator: &str, input: R, out: W) -> Result<usize> {
    if !valid_annotator(annotator) {
        return Err(CliError::Usage(format!("annotator id `{annotator}` must be letters, digits, `-` or `_`")).into());
    }
    ctx.ws.require("intrusion-gen", &stage_hash(&ctx.cfg, "intrusion-gen"))?;
    let items: Vec<BlindedItem> = store::read_jsonl(&ctx.path(files::INTRUSION_BLINDED))?;
    annotate_session(&items, &annotation_path(ctx, annotator), input, out)
}

pub fn intrusion_score(ctx: &Ctx) -> Result<Value> {
    let c = &ctx.cfg.intrusion;
    let primary: Vec<_> = c.annotators.iter().map(|a| annotation_path(ctx, a)).collect();
    if let Some(missing) = primary.iter().find(|p| !p.exists()) {
        return Err(CliError::Data(format!("no annotations at {}; run `annotate` first", missing.display())).into());
    }
    let resolver = c.resolver.as_deref().map(|r| annotation_path(ctx, r)).filter(|p| p.exists());
    let mut external = primary.clone();
    external.extend(resolver.clone());
    ctx.run_stage("intrusion-score", external, |ctx| {
        let items: Vec<IntrusionItem> = store::read_jsonl(&ctx.path(files::INTRUSION_ITEMS))?;
        let answers = primary.iter().map(|p| read_annotations(p)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<Option<usize>>> =
            items.iter().map(|it| answers.iter().map(|a| a.get(&it.item_id).copied()).collect()).collect();
        let third = resolver.as_deref().map(read_annotations).transpose()?;
        let third: Option<Vec<Option<usize>>> =
            third.map(|t| items.iter().map(|it| t.get(&it.item_id).copied()).collect());
        let missing = rows.iter().filter(|r| r.iter().any(Option::is_none)).count();
        let score = score_items(&items, &AnnotationMatrix::new(rows), third.as_deref())?;
        let out = ctx.path(files::INTRUSION_SCORE);
        store::write_json(&out, &json!({"annotators": c.annotators, "resolver": c.resolver, "score": score, "incomplete_items": missing}))?;
        Ok(StageOutput {
            files: vec![out],
            summary: json!({"accuracy": score.accuracy, "alpha": score.alpha, "items": score.items, "incomplete_items": missing}),
        })
    })
}

pub fn mi_report(ctx: &Ctx) -> Result<Value> {
    ctx.run_stage("mi-report", vec![], |ctx| {
        let corpus = ctx.corpus()?;
        let labels = corpus.labels.labels().to_vec();
        let k = ctx.selected_k()?;
        let features = ctx.features(k)?;
        let mut counts = Vec::new();
        let mut ys = Vec::new();
        for f in &features {
            if let Some(y) = corpus.get(&f.doc_id).and_then(|d| corpus.label_id(d)) {
                counts.push(f.raw.clone());
                ys.push(y);
            }
        }
        let table = mutual_information(&counts, &ys, labels.len())?;
        let top = top_clusters_per_frame(&table, labels.len(), ctx.cfg.mi.top_n);
        let model = ctx.cluster_model(k)?;
        let vectors = ctx.embeddings()?.expansions;
        let sentences: Vec<String> = ctx.expansions()?.into_iter().map(|e| e.sentence).collect();
        let mut frames = Vec::new();
        let mut md = format!("# Cluster / frame mutual information (k = {k})\n");
        for (f, entries) in top.iter().enumerate() {
            md.push_str(&format!("\n## {}\n\n| cluster | MI | nearest expansions |\n|---|---|---|\n", labels[f]));
            let mut rows = Vec::new();
            for e in entries {
                let ranked = rank_by_centroid_distance(&model, &vectors, e.cluster, 1.0)?;
                let examples: Vec<&str> =
                    ranked.members.iter().take(ctx.cfg.mi.examples).map(|(i, _)| sentences[*i].as_str()).collect();
                md.push_str(&format!(
                    "| {} | {:.4} | {} |\n",
                    e.cluster,
                    e.mi,
                    examples.join("<br>").replace('|', "\\|")
                ));
                rows.push(json!({"cluster": e.cluster, "mi": e.mi, "examples": examples}));
            }
            frames.push(json!({"frame": labels[f], "top": rows}));
        }
        let out = ctx.path(files::MI_REPORT);
        store::write_json(
            &out,
            &json!({"k": k, "labels": labels, "documents": ys.len(), "table": table, "frames": frames}),
        )?;
        let md_path = ctx.path(files::MI_MARKDOWN);
        store::atomic_write(&md_path, md.as_bytes())?;
        Ok(StageOutput { files: vec![out, md_path], summary: json!({"k": k, "documents": ys.len()}) })
    })
}

/// Majority and random baselines scored on each held-out fold.
fn fold_baselines(ds: &RelationDataset, folds: usize, seed: u64) -> Result<(CvSummary, CvSummary)> {
    let ys: Vec<usize> = ds.examples.iter().map(|e| e.label.index()).collect();
    let assignment = stratified_folds(&ys, N_CLASSES, folds, seed)?;
    let mut majority = Vec::with_capacity(folds);
    let mut random = Vec::with_capacity(folds);
    for f in 0..folds {
        let test = RelationDataset::new(
            ds.examples.iter().zip(&assignment).filter(|(_, &a)| a == f).map(|(e, _)| e.clone()).collect(),
        );
        majority.push(baseline_majority(&test)?);
        random.push(baseline_random(&test, rng::derive(seed, f as u64))?);
    }
    Ok((CvSummary::from_folds(majority), CvSummary::from_folds(random)))
}

pub fn evaluate(ctx: &Ctx) -> Result<Value> {
    let external: Vec<_> = ctx.cfg.kg.static_vectors.iter().cloned().collect();
    ctx.run_stage("evaluate", external, |ctx| {
        let cfg = &ctx.cfg;
        let ds = load_dataset(ctx)?;
        let folds = cfg.evaluation.folds;
        let provider = ctx.embedder();
        let model = relation_model::crossvalidate(&ds, folds, &cfg.relation, provider.as_ref())?;
        let (majority, random) = fold_baselines(&ds, folds, cfg.seed)?;
        let static_lr = match &cfg.kg.static_vectors {
            Some(p) => {
                let table = StaticVectorTable::load(p)?;
                Some(baseline_static_lr(&ds, &table, folds, cfg.seed, &cfg.framing.logistic)?)
            }
            None => None,
        };
        let out = ctx.path(files::EVALUATION);
        store::write_json(
            &out,
            &json!({
                "examples": ds.len(),
                "class_counts": ds.class_counts.iter().map(|(l, n)| (l.name(), n)).collect::<BTreeMap<_, _>>(),
                "folds": folds,
                "model": model,
                "majority": majority,
                "random": random,
                "static_lr": static_lr,
            }),
        )?;
        Ok(StageOutput {
            files: vec![out],
            summary: json!({
                "model_macro_f1": model.macro_f1.mean,
                "majority_macro_f1": majority.macro_f1.mean,
                "random_macro_f1": random.macro_f1.mean,
                "static_lr_macro_f1": static_lr.as_ref().map(|s| s.cv.macro_f1.mean),
            }),
        })
    })
}

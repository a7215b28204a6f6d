//! Summary of every artifact present, next to reference values.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use narrative_core::store;
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::stages::{files, STAGES};
use crate::workspace::Workspace;

const NOT_RUN: &str = "not run";

/// Relation F1 rows: (system, Temporal, Causal, None, macro).
pub const REFERENCE_RELATION_F1: [(&str, [f64; 4]); 4] = [
    ("majority", [0.00, 0.00, 0.83, 0.27]),
    ("random", [0.23, 0.18, 0.45, 0.28]),
    ("static_lr", [0.32, 0.22, 0.51, 0.35]),
    ("model", [0.59, 0.42, 0.78, 0.60]),
];

/// Five-fold means (accuracy, weighted precision, weighted recall, macro F1), in percent.
pub const REFERENCE_RELATION_CV: [f64; 4] = [64.86, 57.51, 64.86, 59.49];

/// (domain, alpha, accuracy) of the intrusion study.
pub const REFERENCE_INTRUSION: [(&str, f64, f64); 2] = [("immigration", 82.61, 67.5), ("gun_control", 65.89, 37.5)];

/// (domain, embedding-only accuracy, fusion accuracy).
pub const REFERENCE_NEURAL_ACCURACY: [(&str, f64, f64); 2] = [("immigration", 0.65, 0.67), ("gun_control", 0.65, 0.68)];

/// (domain, best k).
pub const REFERENCE_BEST_K: [(&str, usize); 2] = [("immigration", 150), ("gun_control", 50)];

fn load(ws: &Workspace, rel: &str) -> Option<Value> {
    let path = ws.path(rel);
    path.exists().then(|| store::read_json(&path).ok()).flatten()
}

fn num(v: &Value) -> String {
    v.as_f64().map_or_else(|| NOT_RUN.to_string(), |x| format!("{x:.4}"))
}

fn percent(v: &Value) -> String {
    v.as_f64().map_or_else(|| NOT_RUN.to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Annotators with an answer file, in configuration order.
fn annotation_status(cfg: &PipelineConfig, ws: &Workspace) -> String {
    let who: Vec<&str> = cfg
        .intrusion
        .annotators
        .iter()
        .chain(&cfg.intrusion.resolver)
        .filter(|a| ws.path(&format!("{}/{a}.tsv", files::ANNOTATIONS)).exists())
        .map(String::as_str)
        .collect();
    if who.is_empty() {
        NOT_RUN.to_string()
    } else {
        format!("answers from {}", who.join(", "))
    }
}

fn relation_row(m: &Value) -> [Value; 4] {
    let per_class = |i: usize| -> Value {
        let folds = m["folds"].as_array().cloned().unwrap_or_default();
        let f1: Vec<f64> = folds.iter().filter_map(|f| f["per_class"][i]["f1"].as_f64()).collect();
        if f1.is_empty() {
            Value::Null
        } else {
            json!(f1.iter().sum::<f64>() / f1.len() as f64)
        }
    };
    [per_class(0), per_class(1), per_class(2), m["macro_f1"]["mean"].clone()]
}

/// Writes `report.md` and `report.json`; returns their paths.
pub fn write_report(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<PathBuf>> {
    let mut md = String::from("# Pipeline report\n\n## Stages\n\n| stage | status |\n|---|---|\n");
    let mut stages = serde_json::Map::new();
    for (stage, _) in STAGES {
        let status = if stage == "annotate" {
            annotation_status(cfg, ws)
        } else {
            ws.manifest(stage).map_or(NOT_RUN.to_string(), |_| "done".to_string())
        };
        writeln!(md, "| {stage} | {status} |")?;
        stages.insert(stage.to_string(), json!(status));
    }

    let evaluation = load(ws, files::EVALUATION);
    let folds = evaluation
        .as_ref()
        .and_then(|e| e["folds"].as_u64())
        .map_or(String::from("cross-validated"), |f| format!("{f}-fold"));
    writeln!(md, "\n## Relation classification ({folds} mean F1)\n\n| system | Temporal | Causal | None | macro | reference macro |\n|---|---|---|---|---|---|")?;
    let mut relation = serde_json::Map::new();
    for (name, reference) in REFERENCE_RELATION_F1 {
        let local =
            evaluation.as_ref().map(|e| relation_row(if name == "static_lr" { &e[name]["cv"] } else { &e[name] }));
        let cells = local.clone().unwrap_or([Value::Null, Value::Null, Value::Null, Value::Null]);
        writeln!(
            md,
            "| {name} | {} | {} | {} | {} | {:.2} |",
            num(&cells[0]),
            num(&cells[1]),
            num(&cells[2]),
            num(&cells[3]),
            reference[3]
        )?;
        relation.insert(name.to_string(), json!({"local": local, "reference": reference}));
    }
    if let Some(e) = &evaluation {
        let m = &e["model"];
        writeln!(
            md,
            "\nModel accuracy {} / weighted precision {} / weighted recall {} percent (reference {:.2} / {:.2} / {:.2}).",
            percent(&m["accuracy"]["mean"]),
            percent(&m["weighted_precision"]["mean"]),
            percent(&m["weighted_recall"]["mean"]),
            REFERENCE_RELATION_CV[0],
            REFERENCE_RELATION_CV[1],
            REFERENCE_RELATION_CV[2],
        )?;
    }

    let clusters = load(ws, files::CLUSTERS);
    let frame_lr = load(ws, files::FRAME_LR);
    let baselines = load(ws, files::BASELINES);
    md.push_str("\n## Frame prediction by k (test macro F1)\n\n| k | inertia | cluster LR | LDA | event types | template |\n|---|---|---|---|---|---|\n");
    let mut per_k = serde_json::Map::new();
    for k in &cfg.clustering.ks {
        let key = k.to_string();
        let pick = |v: &Option<Value>, path: &[&str]| -> Value {
            let mut cur = match v {
                Some(v) => v,
                None => return Value::Null,
            };
            for p in path {
                cur = &cur[*p];
            }
            cur.clone()
        };
        let row = json!({
            "inertia": pick(&clusters, &[&key, "inertia"]),
            "cluster_lr": pick(&frame_lr, &["per_k", &key, "test", "macro_f1"]),
            "lda": pick(&baselines, &["per_k", &key, "lda", "metrics", "macro_f1"]),
            "event_types": pick(&baselines, &["per_k", &key, "event_types", "metrics", "macro_f1"]),
            "template": pick(&baselines, &["per_k", &key, "template", "metrics", "macro_f1"]),
        });
        writeln!(
            md,
            "| {k} | {} | {} | {} | {} | {} |",
            num(&row["inertia"]),
            num(&row["cluster_lr"]),
            num(&row["lda"]),
            num(&row["event_types"]),
            num(&row["template"])
        )?;
        per_k.insert(key, row);
    }
    let best_k = frame_lr.as_ref().map_or(Value::Null, |f| f["best_k"].clone());
    let random = baselines.as_ref().map_or(Value::Null, |b| b["random"]["macro_f1"].clone());
    writeln!(md, "\nRandom baseline macro F1: {}.", num(&random))?;
    writeln!(
        md,
        "Best k: {} (reference: {}).",
        best_k.as_u64().map_or(NOT_RUN.to_string(), |k| k.to_string()),
        REFERENCE_BEST_K.iter().map(|(d, k)| format!("{d} {k}")).collect::<Vec<_>>().join(", ")
    )?;

    md.push_str("\n## Neural frame head (test accuracy)\n\n");
    let neural = load(ws, files::FRAME_NEURAL);
    let reference_neural: Vec<String> = REFERENCE_NEURAL_ACCURACY
        .iter()
        .map(|(d, e, f)| format!("{d}: embedding-only {e:.2}, fusion {f:.2}"))
        .collect();
    match &neural {
        Some(n) => writeln!(
            md,
            "Embedding only {} ± {}; with cluster features {} ± {}.",
            num(&n["embedding_only"]["accuracy"]["mean"]),
            num(&n["embedding_only"]["accuracy"]["std"]),
            num(&n["fusion"]["accuracy"]["mean"]),
            num(&n["fusion"]["accuracy"]["std"]),
        )?,
        None => writeln!(md, "{NOT_RUN}.")?,
    }
    writeln!(md, "Reference: {}.", reference_neural.join("; "))?;

    md.push_str("\n## Cluster intrusion\n\n");
    let intrusion = load(ws, files::INTRUSION_SCORE);
    match &intrusion {
        Some(s) => {
            writeln!(md, "Accuracy {} percent, alpha {}.", num(&s["score"]["accuracy"]), num(&s["score"]["alpha"]))?
        }
        None => writeln!(md, "{NOT_RUN}.")?,
    }
    let reference_intrusion: Vec<String> =
        REFERENCE_INTRUSION.iter().map(|(d, a, acc)| format!("{d}: alpha {a:.2}, accuracy {acc:.1}")).collect();
    writeln!(md, "Reference: {}.", reference_intrusion.join("; "))?;

    md.push_str("\n## Mutual information\n\n");
    let mi = load(ws, files::MI_REPORT);
    match &mi {
        Some(m) => {
            for f in m["frames"].as_array().into_iter().flatten() {
                let top: Vec<String> = f["top"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|e| format!("{} ({})", e["cluster"], num(&e["mi"])))
                    .collect();
                writeln!(md, "- {}: {}", f["frame"].as_str().unwrap_or("?"), top.join(", "))?;
            }
        }
        None => writeln!(md, "{NOT_RUN}.")?,
    }

    let report = json!({
        "stages": stages,
        "relation": relation,
        "per_k": per_k,
        "best_k": best_k,
        "random_frame_macro_f1": random,
        "neural": neural,
        "intrusion": intrusion.map(|s| s["score"].clone()),
        "mi": mi.map(|m| m["frames"].clone()),
        "reference": {
            "relation_cv_percent": REFERENCE_RELATION_CV,
            "intrusion": REFERENCE_INTRUSION,
            "neural_accuracy": REFERENCE_NEURAL_ACCURACY,
            "best_k": REFERENCE_BEST_K,
        },
    });
    let md_path = ws.path(files::REPORT);
    let json_path = ws.path(files::REPORT_JSON);
    store::atomic_write(&md_path, md.as_bytes())?;
    store::write_json(&json_path, &report)?;
    Ok(vec![md_path, json_path])
}

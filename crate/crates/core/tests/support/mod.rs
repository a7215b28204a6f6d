//! Synthetic knowledge graph with phrase parses, and an independent
//! reimplementation of the distillation rules.

use std::collections::{BTreeMap, BTreeSet};

use narrative_core::conllu;
use narrative_core::kg_distill::{build_dataset_from_edges, DistillConfig, KgEdge, PhraseParses, RelationLabel};
use narrative_core::rng;
use rand::seq::SliceRandom;
use rand::Rng;

const VERBS: [&str; 6] = ["eat", "buy", "sell", "read", "fix", "paint"];
const OBJECTS: [&str; 5] = ["apple", "car", "book", "house", "bike"];
const RELATIONS: [&str; 8] =
    ["Precedence", "Succession", "Synchronous", "Reason", "Result", "Conjunction", "Contrast", "Alternative"];

/// Phrase `i`: "i <verb> the <object> <i>", negated as "i do not ..." when
/// `i % 5 == 3`, and intransitive "they <verb> <i>" when `i % 7 == 6`.
pub fn phrase(i: usize) -> (String, Option<(String, String)>) {
    let v = VERBS[i % VERBS.len()];
    let o = OBJECTS[(i / VERBS.len()) % OBJECTS.len()];
    if i % 7 == 6 {
        (format!("they {v} {i}"), None)
    } else if i % 5 == 3 {
        (format!("i do not {v} the {o} {i}"), Some((format!("not {v}"), o.to_string())))
    } else {
        (format!("i {v} the {o} {i}"), Some((v.to_string(), o.to_string())))
    }
}

pub fn parse_of(i: usize) -> String {
    let (text, _) = phrase(i);
    let v = VERBS[i % VERBS.len()];
    let o = OBJECTS[(i / VERBS.len()) % OBJECTS.len()];
    let tag = format!("{i}");
    let rows: Vec<String> = if i % 7 == 6 {
        vec![
            format!("1\tthey\tthey\tPRON\t_\t_\t2\tnsubj\t_\t_"),
            format!("2\t{v}\t{v}\tVERB\t_\t_\t0\troot\t_\t_"),
            format!("3\t{tag}\t{tag}\tNUM\t_\t_\t2\tnummod\t_\t_"),
        ]
    } else if i % 5 == 3 {
        vec![
            format!("1\ti\ti\tPRON\t_\t_\t4\tnsubj\t_\t_"),
            format!("2\tdo\tdo\tAUX\t_\t_\t4\taux\t_\t_"),
            format!("3\tnot\tnot\tPART\t_\t_\t4\tadvmod\t_\t_"),
            format!("4\t{v}\t{v}\tVERB\t_\t_\t0\troot\t_\t_"),
            format!("5\tthe\tthe\tDET\t_\t_\t6\tdet\t_\t_"),
            format!("6\t{o}\t{o}\tNOUN\t_\t_\t4\tobj\t_\t_"),
            format!("7\t{tag}\t{tag}\tNUM\t_\t_\t4\tnummod\t_\t_"),
        ]
    } else {
        vec![
            format!("1\ti\ti\tPRON\t_\t_\t2\tnsubj\t_\t_"),
            format!("2\t{v}\t{v}\tVERB\t_\t_\t0\troot\t_\t_"),
            format!("3\tthe\tthe\tDET\t_\t_\t4\tdet\t_\t_"),
            format!("4\t{o}\t{o}\tNOUN\t_\t_\t2\tobj\t_\t_"),
            format!("5\t{tag}\t{tag}\tNUM\t_\t_\t2\tnummod\t_\t_"),
        ]
    };
    format!("# text = {text}\n{}\n\n", rows.join("\n"))
}

pub fn parses(n: usize, missing: &BTreeSet<usize>) -> PhraseParses {
    let src: String = (0..n).filter(|i| !missing.contains(i)).map(parse_of).collect();
    PhraseParses::from_sentences(conllu::parse(src.as_bytes()).unwrap().into_iter().map(|p| p.sentence))
}

pub fn synthetic_kg(seed: u64, n_edges: usize, n_phrases: usize) -> Vec<KgEdge> {
    let mut rng = rng::seeded(seed);
    (0..n_edges)
        .map(|_| {
            let h = rng.random_range(0..n_phrases);
            let t = rng.random_range(0..n_phrases);
            let k = rng.random_range(1..=3);
            let mut rels = RELATIONS.to_vec();
            rels.shuffle(&mut rng);
            KgEdge {
                head_phrase: phrase(h).0,
                tail_phrase: phrase(t).0,
                relation_counts: rels[..k].iter().map(|r| (r.to_string(), rng.random_range(1..4u64))).collect(),
            }
        })
        .collect()
}

pub type Row = (String, String, String, String, RelationLabel);

/// Straightforward reimplementation: pick each edge's relation by count,
/// then priority, then name; keep relations with >= 5 distinct pairs.
pub fn oracle(edges: &[KgEdge], missing: &BTreeSet<usize>, n_phrases: usize) -> Vec<Row> {
    let vo: BTreeMap<String, Option<(String, String)>> =
        (0..n_phrases).filter(|i| !missing.contains(i)).map(phrase).collect();
    oracle_with(edges, &vo)
}

/// Expected rows given the parsed phrases and their verb-object readings
/// (`None` for phrases without an object).
pub fn oracle_with(edges: &[KgEdge], vo: &BTreeMap<String, Option<(String, String)>>) -> Vec<Row> {
    let priority = ["Precedence", "Succession", "Synchronous", "Reason", "Result"];
    let pick = |e: &KgEdge| -> String {
        let mut all: Vec<(&String, &u64)> = e.relation_counts.iter().collect();
        all.sort_by_key(|(r, c)| {
            let p = priority.iter().position(|x| x == r).unwrap_or(priority.len());
            (std::cmp::Reverse(**c), p, r.to_string())
        });
        all[0].0.clone()
    };
    let mut pairs: BTreeMap<String, BTreeSet<(String, String)>> = BTreeMap::new();
    for e in edges {
        pairs.entry(pick(e)).or_default().insert((e.head_phrase.clone(), e.tail_phrase.clone()));
    }
    let mut rows = Vec::new();
    for e in edges {
        let r = pick(e);
        if pairs[&r].len() < 5 {
            continue;
        }
        let label = match r.as_str() {
            "Precedence" | "Succession" | "Synchronous" => RelationLabel::Temporal,
            "Reason" | "Result" => RelationLabel::Causal,
            _ => RelationLabel::None,
        };
        if let (Some(Some(h)), Some(Some(t))) = (vo.get(&e.head_phrase), vo.get(&e.tail_phrase)) {
            rows.push((h.0.clone(), h.1.clone(), t.0.clone(), t.1.clone(), label));
        }
    }
    rows
}

pub fn run(edges: &[KgEdge], p: &PhraseParses) -> Vec<Row> {
    let (ds, _) = build_dataset_from_edges(edges, p, &DistillConfig::default()).unwrap();
    ds.examples.into_iter().map(|e| (e.head.verb, e.head.object, e.tail.verb, e.tail.object, e.label)).collect()
}

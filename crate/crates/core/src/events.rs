//! Verb-centric event mentions from dependency parses.
//!
//! A candidate verb is a token tagged `VERB` whose relation is not `aux` or
//! `auxpass`. Its object head is the direct object in active clauses and the
//! passive subject when the verb governs a passive construction.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Token};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voice {
    Active,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventMention {
    pub doc_id: String,
    pub sentence_index: usize,
    pub verb_index: usize,
    pub object_index: usize,
    pub verb_lemma: String,
    pub object_lemma: String,
    pub voice: Voice,
}

impl EventMention {
    pub fn key(&self) -> (&str, &str) {
        (&self.verb_lemma, &self.object_lemma)
    }
}

const OBJECT_RELS: [&str; 2] = ["obj", "dobj"];
const PASSIVE_SUBJECT_RELS: [&str; 2] = ["nsubjpass", "nsubj:pass"];

pub fn is_candidate_verb(token: &Token) -> bool {
    token.upos == "VERB" && !matches!(token.deprel.as_str(), "aux" | "auxpass" | "aux:pass")
}

pub(crate) fn lemma_of(token: &Token) -> String {
    let lemma = if token.lemma.is_empty() || token.lemma == "_" { &token.form } else { &token.lemma };
    lemma.to_lowercase()
}

/// Object heads for `verb`, with conjoined objects expanded. Returns the
/// voice together with token indices in ascending order.
pub(crate) fn object_heads(sentence: &Sentence, verb: &Token) -> (Voice, Vec<usize>) {
    let passive: Vec<usize> = sentence
        .dependents(verb.index)
        .filter(|t| PASSIVE_SUBJECT_RELS.contains(&t.deprel.as_str()))
        .map(|t| t.index)
        .collect();
    let (voice, direct) = if passive.is_empty() {
        let objs = sentence
            .dependents(verb.index)
            .filter(|t| OBJECT_RELS.contains(&t.deprel.as_str()))
            .map(|t| t.index)
            .collect();
        (Voice::Active, objs)
    } else {
        (Voice::Passive, passive)
    };

    let mut all = BTreeSet::new();
    let mut stack = direct;
    while let Some(i) = stack.pop() {
        if i == verb.index || !all.insert(i) {
            continue;
        }
        stack.extend(sentence.dependents(i).filter(|t| t.base_deprel() == "conj").map(|t| t.index));
    }
    (voice, all.into_iter().collect())
}

/// Event mentions of one sentence, sorted by verb then object index.
pub fn extract_events(sentence: &Sentence, doc_id: &str) -> Vec<EventMention> {
    let mut out = Vec::new();
    for verb in sentence.tokens.iter().filter(|t| is_candidate_verb(t)) {
        let verb_lemma = lemma_of(verb);
        if verb_lemma.is_empty() {
            continue;
        }
        let (voice, objects) = object_heads(sentence, verb);
        for obj in objects {
            let Some(obj_tok) = sentence.token(obj) else { continue };
            let object_lemma = lemma_of(obj_tok);
            if object_lemma.is_empty() {
                continue;
            }
            out.push(EventMention {
                doc_id: doc_id.to_string(),
                sentence_index: sentence.index,
                verb_index: verb.index,
                object_index: obj,
                verb_lemma: verb_lemma.clone(),
                object_lemma,
                voice,
            });
        }
    }
    out.sort_by_key(|m| (m.verb_index, m.object_index));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEvents {
    pub doc_id: String,
    pub mentions: Vec<EventMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTable {
    pub documents: Vec<DocumentEvents>,
    pub unique_events: usize,
    pub total_mentions: usize,
}

impl EventTable {
    pub fn from_documents(documents: Vec<DocumentEvents>) -> Self {
        let unique: HashSet<(&str, &str)> =
            documents.iter().flat_map(|d| d.mentions.iter().map(EventMention::key)).collect();
        let unique_events = unique.len();
        let total_mentions = documents.iter().map(|d| d.mentions.len()).sum();
        EventTable { documents, unique_events, total_mentions }
    }

    pub fn mentions(&self) -> impl Iterator<Item = &EventMention> {
        self.documents.iter().flat_map(|d| d.mentions.iter())
    }

    pub fn for_doc(&self, doc_id: &str) -> Option<&[EventMention]> {
        self.documents.iter().find(|d| d.doc_id == doc_id).map(|d| d.mentions.as_slice())
    }

    /// Flat records, one per mention, in document order.
    pub fn records(&self) -> Vec<EventMention> {
        self.mentions().cloned().collect()
    }

    /// Regroups flat records; `doc_order` supplies documents without mentions.
    pub fn from_records(doc_order: &[String], records: Vec<EventMention>) -> Self {
        let mut grouped: HashMap<String, Vec<EventMention>> = HashMap::new();
        for r in records {
            grouped.entry(r.doc_id.clone()).or_default().push(r);
        }
        let documents = doc_order
            .iter()
            .map(|id| DocumentEvents { doc_id: id.clone(), mentions: grouped.remove(id).unwrap_or_default() })
            .collect();
        EventTable::from_documents(documents)
    }
}

/// Lemmas ranked by descending frequency (ties alphabetical), truncated to
/// the top `ceil(fraction * n)` entries.
fn top_fraction(counts: HashMap<&str, usize>, fraction: f64) -> HashSet<&str> {
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by_key(|&(lemma, n)| (Reverse(n), lemma));
    let keep = (ranked.len() as f64 * fraction).ceil() as usize;
    ranked.into_iter().take(keep).map(|(l, _)| l).collect()
}

/// Extracts mentions for every document. With `salience_keep_fraction < 1`
/// only mentions whose verb and object both rank in the top fraction of
/// their lemma frequency distribution are kept.
pub fn extract_corpus_events(corpus: &Corpus, salience_keep_fraction: f64) -> Result<EventTable> {
    if !(salience_keep_fraction > 0.0 && salience_keep_fraction <= 1.0) {
        return Err(Error::Precondition(format!("salience keep fraction {salience_keep_fraction} not in (0, 1]")));
    }
    if let Some(d) = corpus.documents().iter().find(|d| d.sentences.is_empty()) {
        return Err(Error::UnparsedDocument(d.id.clone()));
    }
    let mut documents: Vec<DocumentEvents> = corpus
        .documents()
        .par_iter()
        .map(|d| DocumentEvents {
            doc_id: d.id.clone(),
            mentions: d.sentences.iter().flat_map(|s| extract_events(s, &d.id)).collect(),
        })
        .collect();

    if salience_keep_fraction < 1.0 {
        let mut verbs: HashMap<&str, usize> = HashMap::new();
        let mut objects: HashMap<&str, usize> = HashMap::new();
        for m in documents.iter().flat_map(|d| d.mentions.iter()) {
            *verbs.entry(&m.verb_lemma).or_default() += 1;
            *objects.entry(&m.object_lemma).or_default() += 1;
        }
        let keep_verbs: HashSet<String> =
            top_fraction(verbs, salience_keep_fraction).into_iter().map(str::to_owned).collect();
        let keep_objects: HashSet<String> =
            top_fraction(objects, salience_keep_fraction).into_iter().map(str::to_owned).collect();
        for d in &mut documents {
            d.mentions.retain(|m| keep_verbs.contains(&m.verb_lemma) && keep_objects.contains(&m.object_lemma));
        }
    }
    Ok(EventTable::from_documents(documents))
}

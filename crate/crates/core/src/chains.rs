//! Single-hop narrative chains: every ordered pair of event mentions in a
//! document is classified, and Temporal / Causal links are kept.

use std::collections::HashSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::events::{EventMention, EventTable};
use crate::kg_distill::RelationLabel;
use crate::nn::argmax;
use crate::providers::EmbeddingProvider;
use crate::relation_model::{encode_sides, EventSide, RelationClassifier, RelationFeatures};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeChain {
    pub doc_id: String,
    pub event1: EventMention,
    pub event2: EventMention,
    pub relation: RelationLabel,
    pub confidence: f64,
}

impl NarrativeChain {
    /// Lemma-level identity used for deduplication and caching.
    pub fn triple(&self) -> (&str, &str, RelationLabel, &str, &str) {
        (
            &self.event1.verb_lemma,
            &self.event1.object_lemma,
            self.relation,
            &self.event2.verb_lemma,
            &self.event2.object_lemma,
        )
    }
}

/// Ordered pairs `(i, j)`, `i != j`, in document order. With `max_pairs`, a
/// seeded uniform subsample (still in document order).
pub fn candidate_pairs(n_events: usize, max_pairs: Option<usize>, seed: u64) -> Vec<(usize, usize)> {
    let all: Vec<(usize, usize)> =
        (0..n_events).flat_map(|i| (0..n_events).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    match max_pairs {
        Some(m) if m < all.len() => {
            let mut picked = index::sample(&mut rng::seeded(seed), all.len(), m).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|k| all[k]).collect()
        }
        _ => all,
    }
}

/// Scores event pairs of one document with class probabilities in
/// `RelationLabel::ALL` order.
pub trait PairClassifier: Sync {
    fn classify(&self, doc: &Document, events: &[EventMention], pairs: &[(usize, usize)]) -> Result<Vec<[f64; 3]>>;
}

/// Wraps a closure over `(event1, event2)`; handy for rule-based scorers.
pub struct FnClassifier<F>(pub F);

impl<F> PairClassifier for FnClassifier<F>
where
    F: Fn(&EventMention, &EventMention) -> [f64; 3] + Sync,
{
    fn classify(&self, _doc: &Document, events: &[EventMention], pairs: &[(usize, usize)]) -> Result<Vec<[f64; 3]>> {
        Ok(pairs.iter().map(|&(i, j)| (self.0)(&events[i], &events[j])).collect())
    }
}

/// The trained relation head; each event is encoded once per document with
/// its sentence as context.
pub struct NeuralPairClassifier<'a> {
    pub model: &'a RelationClassifier,
    pub provider: &'a dyn EmbeddingProvider,
    pub batch_size: usize,
}

/// Context and token spans of a mention within its sentence.
pub fn mention_side(doc: &Document, event: &EventMention) -> Result<EventSide> {
    let sentence = doc
        .sentences
        .get(event.sentence_index)
        .ok_or_else(|| Error::Precondition(format!("{}: sentence {} missing", doc.id, event.sentence_index)))?;
    Ok(EventSide {
        context: sentence.surface(),
        verb_span: vec![event.verb_index - 1],
        object_span: vec![event.object_index - 1],
    })
}

impl PairClassifier for NeuralPairClassifier<'_> {
    fn classify(&self, doc: &Document, events: &[EventMention], pairs: &[(usize, usize)]) -> Result<Vec<[f64; 3]>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let sides: Vec<EventSide> = events.iter().map(|e| mention_side(doc, e)).collect::<Result<_>>()?;
        let enc = encode_sides(&sides, self.provider, self.model.max_tokens, self.batch_size)?;
        pairs
            .iter()
            .map(|&(i, j)| {
                Ok(self.model.predict(&RelationFeatures::from_pair(&enc[i], &enc[j]).concat())?.probabilities)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub max_pairs: Option<usize>,
    /// Minimum predicted-class probability; 0 keeps every non-None link.
    pub confidence_threshold: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { max_pairs: None, confidence_threshold: 0.0, seed: 42 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DocChains {
    pub chains: Vec<NarrativeChain>,
    pub candidates: usize,
    pub duplicates_removed: usize,
}

pub fn build_chains(
    doc: &Document,
    events: &[EventMention],
    classifier: &dyn PairClassifier,
    config: &ChainConfig,
) -> Result<DocChains> {
    let pairs = candidate_pairs(events.len(), config.max_pairs, rng::derive(config.seed, doc_stream(&doc.id)));
    let probs = classifier.classify(doc, events, &pairs)?;
    let none = RelationLabel::None.index();
    let mut seen = HashSet::new();
    let mut out = DocChains { candidates: pairs.len(), ..Default::default() };
    for (&(i, j), p) in pairs.iter().zip(&probs) {
        let k = argmax(p);
        if k == none || p[k] <= p[none] || p[k] < config.confidence_threshold {
            continue;
        }
        let chain = NarrativeChain {
            doc_id: doc.id.clone(),
            event1: events[i].clone(),
            event2: events[j].clone(),
            relation: RelationLabel::ALL[k],
            confidence: p[k],
        };
        let key = {
            let t = chain.triple();
            (t.0.to_string(), t.1.to_string(), t.2, t.3.to_string(), t.4.to_string())
        };
        if seen.insert(key) {
            out.chains.push(chain);
        } else {
            out.duplicates_removed += 1;
        }
    }
    Ok(out)
}

fn doc_stream(doc_id: &str) -> u64 {
    let h = crate::store::sha256_hex(doc_id);
    u64::from_str_radix(&h[..16], 16).unwrap_or(0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    pub chains: Vec<NarrativeChain>,
    pub candidates: usize,
    pub duplicates_removed: usize,
    /// Documents skipped after provider failures.
    pub skipped_documents: Vec<String>,
}

impl ChainRun {
    pub fn per_document_mean(&self, documents: usize) -> f64 {
        if documents == 0 {
            0.0
        } else {
            self.chains.len() as f64 / documents as f64
        }
    }
}

/// Chains for every document with events, in corpus order. Provider failures
/// skip the document with a warning; other errors abort.
pub fn build_corpus_chains(
    corpus: &Corpus,
    events: &EventTable,
    classifier: &dyn PairClassifier,
    config: &ChainConfig,
) -> Result<ChainRun> {
    let results: Vec<(String, Result<DocChains>)> = events
        .documents
        .par_iter()
        .map(|de| {
            let outcome = match corpus.get(&de.doc_id) {
                Some(doc) => build_chains(doc, &de.mentions, classifier, config),
                None => Err(Error::Precondition(format!("events reference unknown document {}", de.doc_id))),
            };
            (de.doc_id.clone(), outcome)
        })
        .collect();
    let mut run = ChainRun::default();
    for (doc_id, outcome) in results {
        match outcome {
            Ok(d) => {
                run.candidates += d.candidates;
                run.duplicates_removed += d.duplicates_removed;
                run.chains.extend(d.chains);
            }
            Err(e) if e.is_provider() => {
                log::warn!("skipping {doc_id}: {e}");
                run.skipped_documents.push(doc_id);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::{Sentence, Token};
    use crate::corpus::{Domain, Split};
    use crate::events::extract_events;
    use crate::providers::StubEmbedder;
    use crate::relation_model::RelationClassifier;
    use proptest::prelude::*;

    fn tok(index: usize, form: &str, upos: &str, head: usize, deprel: &str) -> Token {
        Token { index, form: form.into(), lemma: form.to_lowercase(), upos: upos.into(), head, deprel: deprel.into() }
    }

    fn doc() -> (Document, Vec<EventMention>) {
        let s1 = Sentence::new(
            0,
            vec![
                tok(1, "Officials", "NOUN", 2, "nsubj"),
                tok(2, "seek", "VERB", 0, "root"),
                tok(3, "permit", "NOUN", 2, "obj"),
            ],
        );
        let s2 = Sentence::new(
            1,
            vec![
                tok(1, "Congress", "PROPN", 2, "nsubj"),
                tok(2, "pass", "VERB", 0, "root"),
                tok(3, "legislation", "NOUN", 2, "obj"),
                tok(4, "and", "CCONJ", 5, "cc"),
                tok(5, "fund", "VERB", 2, "conj"),
                tok(6, "wall", "NOUN", 5, "obj"),
            ],
        );
        let d = Document {
            id: "d1".into(),
            text: "Officials seek permit. Congress pass legislation and fund wall.".into(),
            domain: Domain::Immigration,
            frame_label: None,
            split: Split::Train,
            sentences: vec![s1, s2],
        };
        let mut ev = extract_events(&d.sentences[0], "d1");
        ev.extend(extract_events(&d.sentences[1], "d1"));
        (d, ev)
    }

    #[test]
    fn pair_counts() {
        assert_eq!(candidate_pairs(3, None, 0).len(), 6);
        assert!(candidate_pairs(1, None, 0).is_empty());
        let a = candidate_pairs(10, Some(20), 42);
        assert_eq!(a.len(), 20);
        assert_eq!(a, candidate_pairs(10, Some(20), 42));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn always_none_gives_no_chains() {
        let (d, ev) = doc();
        let c = FnClassifier(|_: &EventMention, _: &EventMention| [0.1, 0.1, 0.8]);
        let out = build_chains(&d, &ev, &c, &ChainConfig::default()).unwrap();
        assert!(out.chains.is_empty());
        assert_eq!(out.candidates, 6);
    }

    #[test]
    fn one_designated_causal_pair() {
        let (d, ev) = doc();
        let c = FnClassifier(|a: &EventMention, b: &EventMention| {
            if a.verb_lemma == "seek" && b.verb_lemma == "pass" {
                [0.1, 0.7, 0.2]
            } else {
                [0.0, 0.0, 1.0]
            }
        });
        let out = build_chains(&d, &ev, &c, &ChainConfig::default()).unwrap();
        assert_eq!(out.chains.len(), 1);
        let ch = &out.chains[0];
        assert_eq!(ch.triple(), ("seek", "permit", RelationLabel::Causal, "pass", "legislation"));
        assert_eq!(ch.confidence, 0.7);
    }

    #[test]
    fn duplicate_triples_are_counted() {
        let (mut d, mut ev) = doc();
        let extra = ev[0].clone();
        d.sentences.push(d.sentences[0].clone());
        ev.push(EventMention { sentence_index: 2, ..extra });
        let c = FnClassifier(|a: &EventMention, b: &EventMention| {
            if a.verb_lemma == "seek" && b.verb_lemma == "fund" {
                [0.9, 0.05, 0.05]
            } else {
                [0.0, 0.0, 1.0]
            }
        });
        let out = build_chains(&d, &ev, &c, &ChainConfig::default()).unwrap();
        assert_eq!(out.chains.len(), 1);
        assert_eq!(out.duplicates_removed, 1);
    }

    #[test]
    fn neural_classifier_runs_on_stub_encoder() {
        let (d, ev) = doc();
        let p = StubEmbedder::new(4, 1);
        let m = RelationClassifier::zeros(4, 3);
        let c = NeuralPairClassifier { model: &m, provider: &p, batch_size: 8 };
        let probs = c.classify(&d, &ev, &candidate_pairs(ev.len(), None, 0)).unwrap();
        assert_eq!(probs.len(), 6);
        // uniform output ties resolve to Temporal, but never beat None strictly
        assert!(build_chains(&d, &ev, &c, &ChainConfig::default()).unwrap().chains.is_empty());
    }

    proptest! {
        #[test]
        fn chains_respect_invariants(table in proptest::collection::vec(proptest::array::uniform3(0.0f64..1.0), 6)) {
            let (d, ev) = doc();
            let norm: Vec<[f64; 3]> = table.iter().map(|p| {
                let s = p.iter().sum::<f64>().max(1e-9);
                [p[0] / s, p[1] / s, p[2] / s]
            }).collect();
            let lookup = norm.clone();
            let c = FnClassifier(move |a: &EventMention, b: &EventMention| {
                lookup[(a.verb_index + 3 * a.sentence_index + b.verb_index) % 6]
            });
            let out = build_chains(&d, &ev, &c, &ChainConfig::default()).unwrap();
            prop_assert!(out.chains.len() <= out.candidates);
            for ch in &out.chains {
                prop_assert!(ch.relation != RelationLabel::None);
                prop_assert!(ch.event1 != ch.event2);
            }
            let again = build_chains(&d, &ev, &c, &ChainConfig::default()).unwrap();
            prop_assert_eq!(out, again);
        }
    }
}

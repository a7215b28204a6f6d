//! Distils a Temporal / Causal / None relation dataset from an eventuality
//! knowledge graph.
//!
//! Each edge carries occurrence counts per discourse relation type. The
//! edge's relation is the one with the largest normalised count; relation
//! types selected on fewer than `min_unique_pairs` distinct phrase pairs are
//! dropped; surviving edges are reduced to verb-object pairs and labelled.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conllu::{self, Sentence};
use crate::error::{Error, Result};
use crate::events::{is_candidate_verb, lemma_of, object_heads};
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationLabel {
    Temporal,
    Causal,
    None,
}

impl RelationLabel {
    /// Class order used by every model; ties resolve to the earlier entry.
    pub const ALL: [RelationLabel; 3] = [RelationLabel::Temporal, RelationLabel::Causal, RelationLabel::None];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationLabel::Temporal => "Temporal",
            RelationLabel::Causal => "Causal",
            RelationLabel::None => "None",
        }
    }
}

pub const TEMPORAL_RELATIONS: [&str; 3] = ["Precedence", "Succession", "Synchronous"];
pub const CAUSAL_RELATIONS: [&str; 2] = ["Reason", "Result"];

/// Groups discourse relation types into the three classes.
pub fn map_label(relation_type: &str) -> RelationLabel {
    if TEMPORAL_RELATIONS.contains(&relation_type) {
        RelationLabel::Temporal
    } else if CAUSAL_RELATIONS.contains(&relation_type) {
        RelationLabel::Causal
    } else {
        RelationLabel::None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgEdge {
    #[serde(rename = "head")]
    pub head_phrase: String,
    #[serde(rename = "tail")]
    pub tail_phrase: String,
    #[serde(rename = "relations")]
    pub relation_counts: BTreeMap<String, u64>,
}

impl KgEdge {
    pub fn validate(&self) -> Result<()> {
        if self.relation_counts.is_empty() {
            return Err(Error::Precondition(format!(
                "edge ({}, {}) has no relations",
                self.head_phrase, self.tail_phrase
            )));
        }
        if let Some((r, _)) = self.relation_counts.iter().find(|(_, &c)| c == 0) {
            return Err(Error::Precondition(format!("relation `{r}` has a zero count")));
        }
        Ok(())
    }

    fn total(&self) -> u64 {
        self.relation_counts.values().sum()
    }
}

/// Normalised count of `relation` among all relations on the edge.
pub fn relation_strength(edge: &KgEdge, relation: &str) -> Result<f64> {
    let count = *edge.relation_counts.get(relation).ok_or_else(|| Error::RelationAbsent(relation.to_string()))?;
    Ok(count as f64 / edge.total() as f64)
}

/// Tie-break order for relation selection. Types listed earlier win ties;
/// unlisted types rank after all listed ones, alphabetically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationPriority(pub Vec<String>);

impl Default for RelationPriority {
    fn default() -> Self {
        RelationPriority(TEMPORAL_RELATIONS.iter().chain(CAUSAL_RELATIONS.iter()).map(|s| s.to_string()).collect())
    }
}

impl RelationPriority {
    fn rank<'a>(&self, relation: &'a str) -> (usize, &'a str) {
        match self.0.iter().position(|r| r == relation) {
            Some(i) => (i, ""),
            None => (self.0.len(), relation),
        }
    }
}

/// The edge's strongest relation and its strength.
pub fn select_edge_relation(edge: &KgEdge, priority: &RelationPriority) -> (String, f64) {
    let (best, &count) = edge
        .relation_counts
        .iter()
        .min_by(|(ra, ca), (rb, cb)| cb.cmp(ca).then_with(|| priority.rank(ra).cmp(&priority.rank(rb))))
        .expect("validated edge has at least one relation");
    (best.clone(), count as f64 / edge.total() as f64)
}

/// Relation types selected on at least `min_unique_pairs` distinct
/// `(head, tail)` phrase pairs.
pub fn filter_relations<'a, I>(edges: I, min_unique_pairs: usize, priority: &RelationPriority) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a KgEdge>,
{
    let mut pairs: HashMap<String, HashSet<(String, String)>> = HashMap::new();
    for e in edges {
        let (r, _) = select_edge_relation(e, priority);
        pairs.entry(r).or_default().insert((e.head_phrase.clone(), e.tail_phrase.clone()));
    }
    pairs.into_iter().filter(|(_, p)| p.len() >= min_unique_pairs).map(|(r, _)| r).collect()
}

pub const NEGATION_MARKERS: [&str; 5] = ["no", "not", "n't", "never", "none"];

/// A verb-object pair. Token positions are 0-based indices of whitespace
/// tokens in the context the pair was read from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoPair {
    pub verb: String,
    pub object: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verb_tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub object_tokens: Vec<usize>,
}

impl VoPair {
    pub fn new(verb: impl Into<String>, object: impl Into<String>) -> Self {
        VoPair { verb: verb.into(), object: object.into(), verb_tokens: Vec::new(), object_tokens: Vec::new() }
    }
}

fn negation_of(parse: &Sentence, verb: usize) -> Option<usize> {
    parse.dependents(verb).find(|t| NEGATION_MARKERS.contains(&t.form.to_lowercase().as_str())).map(|t| t.index)
}

/// All verb x object combinations in a phrase parse. Negated verbs become
/// `"not <verb>"`; phrases lacking either a verb or an object yield nothing.
pub fn reduce_to_vo(phrase_parse: &Sentence) -> Vec<VoPair> {
    let mut verbs = Vec::new();
    let mut objects = BTreeSet::new();
    for v in phrase_parse.tokens.iter().filter(|t| is_candidate_verb(t)) {
        let lemma = lemma_of(v);
        if lemma.is_empty() {
            continue;
        }
        let (_, objs) = object_heads(phrase_parse, v);
        objects.extend(objs);
        let (name, mut toks) = match negation_of(phrase_parse, v.index) {
            Some(neg) => (format!("not {lemma}"), vec![neg - 1, v.index - 1]),
            None => (lemma, vec![v.index - 1]),
        };
        toks.sort_unstable();
        verbs.push((v.index, name, toks));
    }
    let mut out = Vec::new();
    for (vi, verb, vtoks) in &verbs {
        for &oi in &objects {
            if oi == *vi {
                continue;
            }
            let Some(obj) = phrase_parse.token(oi) else { continue };
            let object = lemma_of(obj);
            if object.is_empty() {
                continue;
            }
            out.push(VoPair { verb: verb.clone(), object, verb_tokens: vtoks.clone(), object_tokens: vec![oi - 1] });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationExample {
    pub head: VoPair,
    pub tail: VoPair,
    pub head_context: String,
    pub tail_context: String,
    pub label: RelationLabel,
    pub source_relation: String,
    pub strength: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationDataset {
    pub examples: Vec<RelationExample>,
    pub class_counts: BTreeMap<RelationLabel, usize>,
}

impl RelationDataset {
    pub fn new(examples: Vec<RelationExample>) -> Self {
        let mut d = RelationDataset { examples, class_counts: BTreeMap::new() };
        d.recount();
        d
    }

    pub fn recount(&mut self) {
        self.class_counts = RelationLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for e in &self.examples {
            *self.class_counts.entry(e.label).or_default() += 1;
        }
    }

    pub fn labels(&self) -> Vec<RelationLabel> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Phrase text -> dependency parse, read from CoNLL-U whose sentences carry
/// `# text = <phrase>` comments. Sentences are also reachable by their
/// space-joined surface forms.
#[derive(Debug, Clone, Default)]
pub struct PhraseParses {
    by_text: HashMap<String, Sentence>,
}

impl PhraseParses {
    pub fn from_sentences(sentences: impl IntoIterator<Item = Sentence>) -> Self {
        let mut by_text = HashMap::new();
        for s in sentences {
            by_text.entry(s.surface()).or_insert_with(|| s.clone());
            if let Some(t) = s.text.clone() {
                by_text.insert(t, s);
            }
        }
        PhraseParses { by_text }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed = conllu::parse(BufReader::new(file))?;
        Ok(Self::from_sentences(parsed.into_iter().map(|p| p.sentence)))
    }

    pub fn get(&self, phrase: &str) -> Option<&Sentence> {
        self.by_text.get(phrase)
    }

    pub fn len(&self) -> usize {
        self.by_text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_text.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub min_unique_pairs: usize,
    pub priority: RelationPriority,
    /// Fraction of None examples kept; selection hashes the phrase pair so
    /// it does not depend on stream order.
    pub none_keep_fraction: f64,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { min_unique_pairs: 5, priority: RelationPriority::default(), none_keep_fraction: 1.0, seed: 42 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillStats {
    pub edges: usize,
    pub retained_relations: Vec<String>,
    pub edges_filtered: usize,
    pub edges_missing_parse: usize,
    pub edges_without_pairs: usize,
    pub none_dropped: usize,
}

fn keep_none(head: &str, tail: &str, config: &DistillConfig) -> bool {
    if config.none_keep_fraction >= 1.0 {
        return true;
    }
    let h = store::hash_fields([&config.seed.to_le_bytes()[..], head.as_bytes(), tail.as_bytes()]);
    let bucket = u64::from_str_radix(&h[..16], 16).unwrap_or(0);
    (bucket as f64 / u64::MAX as f64) < config.none_keep_fraction
}

/// Two streaming passes over `edges`: the first counts phrase pairs per
/// selected relation, the second emits examples.
pub fn build_dataset<F, I>(
    edges: F,
    parses: &PhraseParses,
    config: &DistillConfig,
) -> Result<(RelationDataset, DistillStats)>
where
    F: Fn() -> Result<I>,
    I: Iterator<Item = Result<KgEdge>>,
{
    let mut pairs: HashMap<String, HashSet<(String, String)>> = HashMap::new();
    for e in edges()? {
        let e = e?;
        e.validate()?;
        let (r, _) = select_edge_relation(&e, &config.priority);
        pairs.entry(r).or_default().insert((e.head_phrase, e.tail_phrase));
    }
    let retained: BTreeSet<String> =
        pairs.into_iter().filter(|(_, p)| p.len() >= config.min_unique_pairs).map(|(r, _)| r).collect();

    let mut stats = DistillStats { retained_relations: retained.iter().cloned().collect(), ..Default::default() };
    let mut examples = Vec::new();
    for e in edges()? {
        let e = e?;
        stats.edges += 1;
        let (relation, strength) = select_edge_relation(&e, &config.priority);
        if !retained.contains(&relation) {
            stats.edges_filtered += 1;
            continue;
        }
        let label = map_label(&relation);
        if label == RelationLabel::None && !keep_none(&e.head_phrase, &e.tail_phrase, config) {
            stats.none_dropped += 1;
            continue;
        }
        let (Some(hp), Some(tp)) = (parses.get(&e.head_phrase), parses.get(&e.tail_phrase)) else {
            stats.edges_missing_parse += 1;
            continue;
        };
        let heads = reduce_to_vo(hp);
        let tails = reduce_to_vo(tp);
        if heads.is_empty() || tails.is_empty() {
            stats.edges_without_pairs += 1;
            continue;
        }
        let (head_context, tail_context) = (hp.surface(), tp.surface());
        for h in &heads {
            for t in &tails {
                examples.push(RelationExample {
                    head: h.clone(),
                    tail: t.clone(),
                    head_context: head_context.clone(),
                    tail_context: tail_context.clone(),
                    label,
                    source_relation: relation.clone(),
                    strength,
                });
            }
        }
    }
    if stats.edges_missing_parse > 0 {
        log::warn!("{} edges skipped for missing phrase parses", stats.edges_missing_parse);
    }
    Ok((RelationDataset::new(examples), stats))
}

/// [`build_dataset`] over an in-memory edge list.
pub fn build_dataset_from_edges(
    edges: &[KgEdge],
    parses: &PhraseParses,
    config: &DistillConfig,
) -> Result<(RelationDataset, DistillStats)> {
    build_dataset(|| Ok(edges.iter().cloned().map(Ok)), parses, config)
}

/// Streams edges from a line-delimited KG file.
pub fn read_edges(path: &Path) -> Result<impl Iterator<Item = Result<KgEdge>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let path = path.to_path_buf();
    Ok(BufReader::new(file).lines().enumerate().filter_map(move |(i, line)| match line {
        Err(e) => Some(Err(Error::io(&path, e))),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(serde_json::from_str(&l).map_err(|e| Error::MalformedRecord {
            path: path.clone(),
            line: i + 1,
            msg: e.to_string(),
        })),
    }))
}

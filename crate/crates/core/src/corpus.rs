//! Annotated news corpora: record ingestion, parse attachment and splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::conllu::{self, Sentence};
use crate::error::{Error, Result};
use crate::rng;
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Immigration,
    GunControl,
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub domain: Domain,
    #[serde(default)]
    pub frame_label: Option<String>,
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentences: Vec<Sentence>,
}

/// Ordered frame labels; a label's position is its class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FrameLabelSet {
    labels: Vec<String>,
}

pub const MAX_FRAME_LABELS: usize = 15;

impl FrameLabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidLabelSet("label set is empty".into()));
        }
        if labels.len() > MAX_FRAME_LABELS {
            return Err(Error::InvalidLabelSet(format!(
                "{} labels exceeds the maximum of {MAX_FRAME_LABELS}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidLabelSet(format!("duplicate label `{l}`")));
            }
        }
        Ok(FrameLabelSet { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn name(&self, class: usize) -> &str {
        &self.labels[class]
    }
}

impl TryFrom<Vec<String>> for FrameLabelSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        FrameLabelSet::new(v)
    }
}

impl From<FrameLabelSet> for Vec<String> {
    fn from(s: FrameLabelSet) -> Self {
        s.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub labeled: usize,
    pub per_split: BTreeMap<Split, usize>,
    pub per_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub labels: FrameLabelSet,
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(labels: FrameLabelSet, documents: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateDocumentId(doc.id.clone()));
            }
            if let Some(label) = &doc.frame_label {
                if labels.index_of(label).is_none() {
                    return Err(Error::UnknownFrameLabel { id: doc.id.clone(), label: label.clone() });
                }
            }
        }
        Ok(Corpus { labels, documents, by_id })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Class id of a document's frame label, if labeled.
    pub fn label_id(&self, doc: &Document) -> Option<usize> {
        doc.frame_label.as_deref().and_then(|l| self.labels.index_of(l))
    }

    pub fn summary(&self) -> CorpusSummary {
        let mut per_split = BTreeMap::new();
        let mut per_label = BTreeMap::new();
        for d in &self.documents {
            *per_split.entry(d.split).or_insert(0) += 1;
            if let Some(l) = &d.frame_label {
                *per_label.entry(l.clone()).or_insert(0) += 1;
            }
        }
        CorpusSummary { documents: self.documents.len(), labeled: per_label.values().sum(), per_split, per_label }
    }

    /// Persists documents (with sentences) as line-delimited records.
    pub fn save(&self, path: &Path) -> Result<()> {
        store::write_jsonl(path, &self.documents)
    }

    pub fn load_saved(path: &Path, labels: FrameLabelSet) -> Result<Self> {
        Corpus::new(labels, store::read_jsonl(path)?)
    }
}

/// Reads a line-delimited corpus file. Duplicate ids and labels outside
/// `label_set` are hard errors.
pub fn load_corpus(path: &Path, label_set: FrameLabelSet) -> Result<Corpus> {
    let docs: Vec<Document> = store::read_jsonl(path)?;
    let corpus = Corpus::new(label_set, docs)?;
    let s = corpus.summary();
    log::info!(
        "loaded {} documents ({} labeled) from {}: splits {:?}, labels {:?}",
        s.documents,
        s.labeled,
        path.display(),
        s.per_split,
        s.per_label
    );
    Ok(corpus)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ParseReport {
    pub documents_matched: usize,
    pub sentences: usize,
    pub flagged_sentences: usize,
    pub unmatched_doc_ids: Vec<String>,
}

/// Attaches CoNLL-U sentences to documents by `# doc_id`. A document's
/// sentences are replaced, so reloading the same file is idempotent.
pub fn load_parses(mut corpus: Corpus, path: &Path) -> Result<(Corpus, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = conllu::parse(BufReader::new(file))?;

    let mut grouped: BTreeMap<usize, Vec<Sentence>> = BTreeMap::new();
    let mut unmatched: Vec<String> = Vec::new();
    let mut report = ParseReport::default();
    for p in parsed {
        let Some(doc_id) = p.doc_id else {
            return Err(Error::MalformedConllu { line: p.line, msg: "sentence outside any `# doc_id` block".into() });
        };
        match corpus.by_id.get(&doc_id) {
            Some(&i) => {
                report.sentences += 1;
                report.flagged_sentences += usize::from(p.sentence.flagged);
                grouped.entry(i).or_default().push(p.sentence);
            }
            None => {
                if !unmatched.contains(&doc_id) {
                    log::warn!("parse block for unknown document `{doc_id}` ignored");
                    unmatched.push(doc_id);
                }
            }
        }
    }
    report.documents_matched = grouped.len();
    for (i, mut sentences) in grouped {
        for (pos, s) in sentences.iter_mut().enumerate() {
            s.index = pos;
        }
        corpus.documents[i].sentences = sentences;
    }
    report.unmatched_doc_ids = unmatched;
    Ok((corpus, report))
}

/// Seeded shuffle into train/test; the test split has `round(n * fraction)`
/// documents. Document order in the corpus is unchanged.
pub fn split_corpus(mut corpus: Corpus, test_fraction: f64, seed: u64) -> Result<Corpus> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Precondition(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    if let Some(d) = corpus.documents.iter().find(|d| d.split != Split::Unassigned) {
        return Err(Error::Precondition(format!("document `{}` already has a split", d.id)));
    }
    let n = corpus.documents.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    for (rank, &i) in order.iter().enumerate() {
        corpus.documents[i].split = if rank < n_test { Split::Test } else { Split::Train };
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn labels() -> FrameLabelSet {
        FrameLabelSet::new(["Economic", "Crime and Punishment", "Other"]).unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    const RECORDS: &str = r#"{"id":"d1","text":"Police arrest people.","domain":"immigration","frame_label":"Economic"}
{"id":"d2","text":"The bill was passed.","domain":"immigration","frame_label":"Other"}
{"id":"d3","text":"She is tall.","domain":"other"}
"#;

    fn doc(id: &str) -> Document {
        Document {
            id: id.into(),
            text: String::new(),
            domain: Domain::Other,
            frame_label: None,
            split: Split::Unassigned,
            sentences: vec![],
        }
    }

    #[test]
    fn loads_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = load_corpus(&write(dir.path(), "c.jsonl", RECORDS), labels()).unwrap();
        let s = corpus.summary();
        assert_eq!(s.documents, 3);
        assert_eq!(s.labeled, 2);
        assert_eq!(s.per_split[&Split::Unassigned], 3);
        assert_eq!(corpus.label_id(corpus.get("d1").unwrap()), Some(0));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{RECORDS}{}\n", r#"{"id":"d1","text":"x","domain":"other"}"#);
        let err = load_corpus(&write(dir.path(), "c.jsonl", &body), labels()).unwrap_err();
        assert!(matches!(err, Error::DuplicateDocumentId(id) if id == "d1"));
    }

    #[test]
    fn unknown_label_names_record() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"{"id":"zz","text":"x","domain":"other","frame_label":"Weather"}"#;
        let err = load_corpus(&write(dir.path(), "c.jsonl", body), labels()).unwrap_err();
        assert!(matches!(err, Error::UnknownFrameLabel { ref id, .. } if id == "zz"));
    }

    #[test]
    fn label_set_invariants() {
        assert!(FrameLabelSet::new(Vec::<String>::new()).is_err());
        assert!(FrameLabelSet::new(["a", "a"]).is_err());
        assert!(FrameLabelSet::new((0..16).map(|i| i.to_string())).is_err());
        assert_eq!(FrameLabelSet::new((0..15).map(|i| i.to_string())).unwrap().len(), 15);
    }

    const PARSES: &str = "# doc_id = d1\n# sent_id = 0\n\
1\tPolice\tpolice\tNOUN\t_\t_\t2\tnsubj\t_\t_\n\
2\tarrest\tarrest\tVERB\t_\t_\t0\troot\t_\t_\n\
3\tmany\tmany\tADJ\t_\t_\t4\tamod\t_\t_\n\
4\tpeople\tpeople\tNOUN\t_\t_\t2\tobj\t_\t_\n\
5\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_\n\n\
# doc_id = ghost\n# sent_id = 0\n\
1\tHi\thi\tINTJ\t_\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn parses_attach_and_unmatched_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = load_corpus(&write(dir.path(), "c.jsonl", RECORDS), labels()).unwrap();
        let parse_path = write(dir.path(), "p.conllu", PARSES);
        let (corpus, report) = load_parses(corpus, &parse_path).unwrap();
        let d1 = corpus.get("d1").unwrap();
        assert_eq!(d1.sentences.len(), 1);
        assert_eq!(d1.sentences[0].tokens.len(), 5);
        assert_eq!(report.documents_matched, 1);
        assert_eq!(report.unmatched_doc_ids, vec!["ghost".to_string()]);

        let before = corpus.clone();
        let (again, _) = load_parses(corpus, &parse_path).unwrap();
        assert_eq!(again, before);
    }

    #[test]
    fn out_of_range_head_fails_load() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = load_corpus(&write(dir.path(), "c.jsonl", RECORDS), labels()).unwrap();
        let bad = PARSES.replace("4\tpeople\tpeople\tNOUN\t_\t_\t2", "4\tpeople\tpeople\tNOUN\t_\t_\t9");
        let err = load_parses(corpus, &write(dir.path(), "p.conllu", &bad)).unwrap_err();
        assert!(matches!(err, Error::HeadOutOfRange { head: 9, len: 5, .. }));
    }

    #[test]
    fn split_is_deterministic_and_sized() {
        let corpus = Corpus::new(labels(), (0..10).map(|i| doc(&format!("d{i}"))).collect()).unwrap();
        let a = split_corpus(corpus.clone(), 0.1, 42).unwrap();
        let b = split_corpus(corpus, 0.1, 42).unwrap();
        let test_a: Vec<_> = a.documents().iter().filter(|d| d.split == Split::Test).map(|d| &d.id).collect();
        let test_b: Vec<_> = b.documents().iter().filter(|d| d.split == Split::Test).map(|d| &d.id).collect();
        assert_eq!(test_a.len(), 1);
        assert_eq!(test_a, test_b);
    }

    #[test]
    fn split_sizes_match_table_counts() {
        let corpus = Corpus::new(labels(), (0..1969).map(|i| doc(&format!("d{i}"))).collect()).unwrap();
        let s = split_corpus(corpus, 0.1, 42).unwrap().summary();
        assert_eq!(s.per_split[&Split::Test], 197);
        assert_eq!(s.per_split[&Split::Train], 1772);

        let corpus = Corpus::new(labels(), (0..4).map(|i| doc(&format!("d{i}"))).collect()).unwrap();
        let s = split_corpus(corpus, 0.5, 7).unwrap().summary();
        assert_eq!((s.per_split[&Split::Test], s.per_split[&Split::Train]), (2, 2));
    }

    #[test]
    fn split_requires_unassigned() {
        let mut d = doc("a");
        d.split = Split::Train;
        let corpus = Corpus::new(labels(), vec![d, doc("b")]).unwrap();
        assert!(matches!(split_corpus(corpus, 0.5, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn saved_corpus_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = load_corpus(&write(dir.path(), "c.jsonl", RECORDS), labels()).unwrap();
        let (corpus, _) = load_parses(corpus, &write(dir.path(), "p.conllu", PARSES)).unwrap();
        let corpus = split_corpus(corpus, 0.34, 3).unwrap();
        let out = dir.path().join("saved.jsonl");
        corpus.save(&out).unwrap();
        assert_eq!(Corpus::load_saved(&out, labels()).unwrap(), corpus);
    }
}

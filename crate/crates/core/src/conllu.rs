//! Minimal CoNLL-U reader for the columns the pipeline consumes.
//!
//! Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped.
//! Document boundaries come from `# doc_id = ...` (or `# newdoc id = ...`)
//! comments and apply to every following sentence until the next boundary.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Governor index, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    /// Universal relation without its subtype (`nsubj:pass` -> `nsubj`).
    pub fn base_deprel(&self) -> &str {
        self.deprel.split(':').next().unwrap_or(&self.deprel)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 0-based position within the document.
    pub index: usize,
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Set when the sentence has zero or several root tokens.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

impl Sentence {
    pub fn new(index: usize, tokens: Vec<Token>) -> Self {
        let roots = tokens.iter().filter(|t| t.head == 0).count();
        Sentence { index, tokens, text: None, flagged: roots != 1 }
    }

    pub fn token(&self, index: usize) -> Option<&Token> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn dependents(&self, head: usize) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(move |t| t.head == head)
    }

    /// Surface forms joined by single spaces; token `i` is word `i - 1`.
    pub fn surface(&self) -> String {
        self.tokens.iter().map(|t| t.form.as_str()).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSentence {
    pub doc_id: Option<String>,
    pub sent_id: Option<String>,
    pub sentence: Sentence,
    /// Line number of the sentence's first token.
    pub line: usize,
}

fn parse_token(line: &str, lineno: usize) -> Result<Option<Token>> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(Error::MalformedConllu {
            line: lineno,
            msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
        });
    }
    let id = cols[0];
    if id.contains('-') || id.contains('.') {
        return Ok(None);
    }
    let index: usize =
        id.parse().map_err(|_| Error::MalformedConllu { line: lineno, msg: format!("bad token id `{id}`") })?;
    let head: usize =
        cols[6].parse().map_err(|_| Error::MalformedConllu { line: lineno, msg: format!("bad head `{}`", cols[6]) })?;
    let deprel = cols[7].to_string();
    if index == 0 || head == index || deprel.is_empty() || deprel == "_" {
        return Err(Error::MalformedConllu {
            line: lineno,
            msg: format!("invalid token (id {index}, head {head}, deprel `{deprel}`)"),
        });
    }
    Ok(Some(Token {
        index,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        head,
        deprel,
    }))
}

struct Pending {
    tokens: Vec<(Token, usize)>,
    sent_id: Option<String>,
    text: Option<String>,
    first_line: usize,
}

impl Pending {
    fn new() -> Self {
        Pending { tokens: Vec::new(), sent_id: None, text: None, first_line: 0 }
    }
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.strip_prefix(key)?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

/// Parses every sentence in a CoNLL-U stream.
pub fn parse<R: BufRead>(reader: R) -> Result<Vec<ParsedSentence>> {
    let mut out = Vec::new();
    let mut doc_id: Option<String> = None;
    let mut doc_sentence = 0usize;
    let mut pending = Pending::new();

    let mut flush = |pending: &mut Pending, doc_id: &Option<String>, doc_sentence: &mut usize| -> Result<()> {
        if pending.tokens.is_empty() {
            *pending = Pending::new();
            return Ok(());
        }
        let n = pending.tokens.len();
        for (pos, (tok, line)) in pending.tokens.iter().enumerate() {
            if tok.index != pos + 1 {
                return Err(Error::MalformedConllu {
                    line: *line,
                    msg: format!("token ids not contiguous: expected {}, found {}", pos + 1, tok.index),
                });
            }
            if tok.head > n {
                return Err(Error::HeadOutOfRange { line: *line, head: tok.head, len: n });
            }
        }
        let tokens = pending.tokens.drain(..).map(|(t, _)| t).collect();
        let mut sentence = Sentence::new(*doc_sentence, tokens);
        sentence.text = pending.text.take();
        out.push(ParsedSentence {
            doc_id: doc_id.clone(),
            sent_id: pending.sent_id.take(),
            sentence,
            line: pending.first_line,
        });
        *doc_sentence += 1;
        *pending = Pending::new();
        Ok(())
    };

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::MalformedConllu { line: lineno, msg: e.to_string() })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut pending, &doc_id, &mut doc_sentence)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            let new_doc = comment_value(comment, "doc_id").or_else(|| comment_value(comment, "newdoc id"));
            if let Some(id) = new_doc {
                flush(&mut pending, &doc_id, &mut doc_sentence)?;
                doc_id = Some(id.to_string());
                doc_sentence = 0;
            } else if let Some(v) = comment_value(comment, "sent_id") {
                pending.sent_id = Some(v.to_string());
            } else if let Some(v) = comment_value(comment, "text") {
                pending.text = Some(v.to_string());
            }
            continue;
        }
        if let Some(tok) = parse_token(line, lineno)? {
            if pending.tokens.is_empty() {
                pending.first_line = lineno;
            }
            pending.tokens.push((tok, lineno));
        }
    }
    flush(&mut pending, &doc_id, &mut doc_sentence)?;
    Ok(out)
}

/// Renders sentences back to CoNLL-U (unused columns as `_`).
pub fn render(doc_id: Option<&str>, sentences: &[Sentence]) -> String {
    let mut out = String::new();
    if let Some(id) = doc_id {
        out.push_str(&format!("# doc_id = {id}\n"));
    }
    for s in sentences {
        out.push_str(&format!("# sent_id = {}\n", s.index));
        if let Some(text) = &s.text {
            out.push_str(&format!("# text = {text}\n"));
        }
        for t in &s.tokens {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_\n",
                t.index, t.form, t.lemma, t.upos, t.head, t.deprel
            ));
        }
        out.push('\n');
    }
    out
}

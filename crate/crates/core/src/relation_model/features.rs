use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_distill::{RelationExample, VoPair, NEGATION_MARKERS};
use crate::providers::{embed_checked, mean_of, EmbeddingProvider, EmbeddingRequest, TokenSpan};

/// One side of a relation: a context and the verb/object token spans in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventSide {
    pub context: String,
    pub verb_span: TokenSpan,
    pub object_span: TokenSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEncoding {
    pub context: Vec<f64>,
    pub verb: Vec<f64>,
    pub object: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationFeatures {
    pub context_vec: Vec<f64>,
    pub head_verb_vec: Vec<f64>,
    pub head_obj_vec: Vec<f64>,
    pub tail_verb_vec: Vec<f64>,
    pub tail_obj_vec: Vec<f64>,
}

impl RelationFeatures {
    /// `context_vec` is the mean of the two context summaries, which is the
    /// context summary itself when both sides share a sentence.
    pub fn from_pair(head: &EventEncoding, tail: &EventEncoding) -> Self {
        let context_vec = if head.context == tail.context {
            head.context.clone()
        } else {
            mean_of([head.context.as_slice(), tail.context.as_slice()]).unwrap_or_default()
        };
        RelationFeatures {
            context_vec,
            head_verb_vec: head.verb.clone(),
            head_obj_vec: head.object.clone(),
            tail_verb_vec: tail.verb.clone(),
            tail_obj_vec: tail.object.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.context_vec.len()
    }

    /// `[context, head_verb, head_obj, tail_verb, tail_obj]`.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim() * 5);
        for part in
            [&self.context_vec, &self.head_verb_vec, &self.head_obj_vec, &self.tail_verb_vec, &self.tail_obj_vec]
        {
            out.extend_from_slice(part);
        }
        out
    }
}

/// First `max_tokens` whitespace tokens of `text`.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> String {
    text.split_whitespace().take(max_tokens).collect::<Vec<_>>().join(" ")
}

fn token_matches(token: &str, word: &str) -> bool {
    let t = token.to_lowercase();
    let t = t.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
    if word == "not" && NEGATION_MARKERS.contains(&t) {
        return true;
    }
    t == word || (word.chars().count() >= 3 && t.starts_with(word))
}

/// Locates each word of `phrase` among the context tokens, in order.
pub fn align_phrase(phrase: &str, context: &str) -> Result<TokenSpan> {
    let tokens: Vec<&str> = context.split_whitespace().collect();
    let mut span = Vec::new();
    let mut from = 0;
    for word in phrase.split_whitespace().map(str::to_lowercase) {
        let found = (from..tokens.len()).find(|&i| token_matches(tokens[i], &word));
        match found {
            Some(i) => {
                span.push(i);
                from = i + 1;
            }
            None => return Err(Error::SpanNotAligned { span: phrase.to_string(), context: context.to_string() }),
        }
    }
    if span.is_empty() {
        return Err(Error::SpanNotAligned { span: phrase.to_string(), context: context.to_string() });
    }
    Ok(span)
}

fn side_of(pair: &VoPair, context: &str) -> Result<EventSide> {
    let verb_span =
        if pair.verb_tokens.is_empty() { align_phrase(&pair.verb, context)? } else { pair.verb_tokens.clone() };
    let object_span =
        if pair.object_tokens.is_empty() { align_phrase(&pair.object, context)? } else { pair.object_tokens.clone() };
    Ok(EventSide { context: context.to_string(), verb_span, object_span })
}

/// Head and tail sides of a distilled example.
pub fn example_sides(example: &RelationExample) -> Result<(EventSide, EventSide)> {
    Ok((side_of(&example.head, &example.head_context)?, side_of(&example.tail, &example.tail_context)?))
}

fn clip_span(span: &[usize], max_tokens: usize, context: &str) -> Result<TokenSpan> {
    let kept: TokenSpan = span.iter().copied().filter(|&i| i < max_tokens).collect();
    if kept.is_empty() {
        return Err(Error::SpanNotAligned { span: format!("{span:?}"), context: context.to_string() });
    }
    Ok(kept)
}

/// Encodes event sides, calling the provider once per batch of distinct
/// contexts. Contexts are truncated to `max_tokens` tokens; span positions
/// past the cut are dropped.
pub fn encode_sides(
    sides: &[EventSide],
    provider: &dyn EmbeddingProvider,
    max_tokens: usize,
    batch_size: usize,
) -> Result<Vec<EventEncoding>> {
    // context -> spans requested in it
    let mut by_context: BTreeMap<String, Vec<TokenSpan>> = BTreeMap::new();
    let mut slots = Vec::with_capacity(sides.len());
    for side in sides {
        if side.context.trim().is_empty() {
            return Err(Error::Precondition("empty relation context".into()));
        }
        let ctx = truncate_tokens(&side.context, max_tokens);
        let verb = clip_span(&side.verb_span, max_tokens, &side.context)?;
        let object = clip_span(&side.object_span, max_tokens, &side.context)?;
        let spans = by_context.entry(ctx.clone()).or_default();
        let pos = |spans: &mut Vec<TokenSpan>, s: TokenSpan| match spans.iter().position(|x| *x == s) {
            Some(p) => p,
            None => {
                spans.push(s);
                spans.len() - 1
            }
        };
        let vi = pos(spans, verb);
        let oi = pos(spans, object);
        slots.push((ctx, vi, oi));
    }
    let contexts: Vec<(String, Vec<TokenSpan>)> = by_context.into_iter().collect();
    let mut encoded: BTreeMap<&str, (Vec<f64>, Vec<Vec<f64>>)> = BTreeMap::new();
    for chunk in contexts.chunks(batch_size.max(1)) {
        let request = EmbeddingRequest {
            texts: chunk.iter().map(|(c, _)| c.clone()).collect(),
            spans: chunk.iter().map(|(_, s)| s.clone()).collect(),
        };
        let resp = embed_checked(provider, &request)?;
        for (((ctx, _), vector), spans) in chunk.iter().zip(resp.vectors).zip(resp.span_vectors) {
            encoded.insert(ctx.as_str(), (vector, spans));
        }
    }
    Ok(slots
        .into_iter()
        .map(|(ctx, vi, oi)| {
            let (context, spans) = &encoded[ctx.as_str()];
            EventEncoding { context: context.clone(), verb: spans[vi].clone(), object: spans[oi].clone() }
        })
        .collect())
}

/// Features for one distilled example.
pub fn featurize(
    example: &RelationExample,
    provider: &dyn EmbeddingProvider,
    max_tokens: usize,
) -> Result<RelationFeatures> {
    Ok(featurize_all(std::slice::from_ref(example), provider, max_tokens, 64)?.remove(0))
}

pub fn featurize_all(
    examples: &[RelationExample],
    provider: &dyn EmbeddingProvider,
    max_tokens: usize,
    batch_size: usize,
) -> Result<Vec<RelationFeatures>> {
    let mut sides = Vec::with_capacity(examples.len() * 2);
    for e in examples {
        let (h, t) = example_sides(e)?;
        sides.push(h);
        sides.push(t);
    }
    let enc = encode_sides(&sides, provider, max_tokens, batch_size)?;
    Ok(enc.chunks(2).map(|p| RelationFeatures::from_pair(&p[0], &p[1])).collect())
}

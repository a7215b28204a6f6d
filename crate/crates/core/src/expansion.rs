//! Narrative chains rendered as short sentences, either by a text generator
//! or by a fixed template.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::NarrativeChain;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::kg_distill::RelationLabel;
use crate::providers::{DiskCache, GenerationProvider, GenerationRequest, ProviderError, RetryPolicy};
use crate::store;

/// Bump whenever either prompt string changes; it is part of every cache key.
pub const PROMPT_VERSION: &str = "expand-v1";

pub const SYSTEM_PROMPT: &str = "I want you to generate plausible sentences that expand on an event chain from a news article. Events correspond to what we perceive around us and is denoted as a (VERB, OBJECT) pair. The object is the direct object of the verb in a linguistic sense. An example of an event is (arrest, people). The verb and object will correspond to a word in the article and may or may not be in their lemmatized form. An event chain comprises of two events connected by either a causal or temporal relation. It'll be denoted as a tuple as follows: (EVENT_1, RELATION_TYPE, EVENT_2). RELATION_TYPE can be either CAUSAL or TEMPORAL. CAUSAL indicates that EVENT_2 occurred as a result of EVENT_1 or EVENT_2 is the reason why EVENT_1 occurred. TEMPORAL indicates EVENT_2 occurred before, after or synchronously with EVENT_1. An example of an event chain is ((arrest, people), CAUSAL, (protest, legislation)). I will provide you with an event chain and the corresponding news article to which it belongs. I want you to expand the event chain into a plausible sentence.";

const USER_INSTRUCTION: &str = "Generate a very short sentence that expands the events in the event chain and the relationship between them in the context of the news article. Do not generate anything else.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionMethod {
    Llm,
    Template,
}

impl ExpansionMethod {
    pub fn name(self) -> &'static str {
        match self {
            ExpansionMethod::Llm => "llm",
            ExpansionMethod::Template => "template",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedChain {
    pub chain: NarrativeChain,
    pub sentence: String,
    pub method: ExpansionMethod,
    pub cache_key: String,
}

fn relation_tag(label: RelationLabel) -> &'static str {
    match label {
        RelationLabel::Causal => "CAUSAL",
        _ => "TEMPORAL",
    }
}

/// `((v1, o1), RELATION, (v2, o2))` with lemmas as stored.
pub fn render_chain(chain: &NarrativeChain) -> String {
    format!(
        "(({}, {}), {}, ({}, {}))",
        chain.event1.verb_lemma,
        chain.event1.object_lemma,
        relation_tag(chain.relation),
        chain.event2.verb_lemma,
        chain.event2.object_lemma
    )
}

pub fn user_prompt(article: &str, chain: &NarrativeChain) -> String {
    format!("News Article: {article}. Event Chain: {}. {USER_INSTRUCTION}", render_chain(chain))
}

pub fn cache_key(article: &str, chain: &NarrativeChain, method: ExpansionMethod) -> String {
    store::hash_fields([article, &render_chain(chain), PROMPT_VERSION, method.name()])
}

pub fn expand_template(chain: &NarrativeChain) -> ExpandedChain {
    let e1 = &chain.event1;
    let e2 = &chain.event2;
    let kind = if chain.relation == RelationLabel::Causal { "causal" } else { "temporal" };
    let sentence = format!(
        "There is a {kind} relationship between ({}, {}) and ({}, {}).",
        e1.verb_lemma, e1.object_lemma, e2.verb_lemma, e2.object_lemma
    );
    ExpandedChain {
        chain: chain.clone(),
        sentence,
        method: ExpansionMethod::Template,
        cache_key: cache_key("", chain, ExpansionMethod::Template),
    }
}

/// First non-empty line, trimmed of whitespace and enclosing quotes.
pub fn clean_generation(text: &str) -> Option<String> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    let quotes: &[char] = &['"', '\'', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}', '`'];
    let s = line.trim_matches(quotes).trim();
    (!s.is_empty()).then(|| s.to_string())
}

#[derive(Debug, Clone)]
pub struct ExpansionConfig {
    pub method: ExpansionMethod,
    /// Worker threads for concurrent provider calls.
    pub parallelism: usize,
    pub retry: RetryPolicy,
    pub max_tokens: usize,
    pub temperature: f64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            method: ExpansionMethod::Llm,
            parallelism: 4,
            retry: RetryPolicy::default(),
            max_tokens: crate::providers::DEFAULT_MAX_TOKENS,
            temperature: crate::providers::DEFAULT_TEMPERATURE,
        }
    }
}

/// Counters shared by concurrent expansion calls.
#[derive(Debug, Default)]
pub struct ExpansionCounters {
    pub provider_calls: AtomicUsize,
    pub cache_hits: AtomicUsize,
}

pub fn expand_llm(
    chain: &NarrativeChain,
    article: &str,
    generator: &dyn GenerationProvider,
    cache: Option<&DiskCache>,
    config: &ExpansionConfig,
    counters: &ExpansionCounters,
) -> Result<ExpandedChain> {
    if article.trim().is_empty() {
        return Err(Error::Precondition(format!("article text for {} is empty", chain.doc_id)));
    }
    let key = cache_key(article, chain, ExpansionMethod::Llm);
    let disk_key = store::hash_fields([key.as_str(), &generator.model_id()]);
    let done = |sentence: String| ExpandedChain {
        chain: chain.clone(),
        sentence,
        method: ExpansionMethod::Llm,
        cache_key: key.clone(),
    };
    if let Some(hit) = cache.and_then(|c| c.get::<String>(&disk_key)) {
        counters.cache_hits.fetch_add(1, Ordering::Relaxed);
        return Ok(done(hit));
    }
    let request = GenerationRequest {
        system: SYSTEM_PROMPT.to_string(),
        user: user_prompt(article, chain),
        max_tokens: config.max_tokens,
        temperature: config.temperature,
    };
    let response = config.retry.run(|| {
        counters.provider_calls.fetch_add(1, Ordering::Relaxed);
        generator.generate(&request)
    });
    let text = match response {
        Ok(r) => r.text,
        Err(ProviderError::EmptyGeneration) => return Err(Error::EmptyExpansion),
        Err(e) => return Err(e.into()),
    };
    let sentence = clean_generation(&text).ok_or(Error::EmptyExpansion)?;
    if let Some(c) = cache {
        c.put(&disk_key, &sentence)?;
    }
    Ok(done(sentence))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFailure {
    pub index: usize,
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRun {
    /// Successful expansions in input order.
    pub expansions: Vec<ExpandedChain>,
    pub failures: Vec<ExpansionFailure>,
    pub provider_calls: usize,
    pub cache_hits: usize,
}

/// Expands every chain, keeping input order. Single-item failures are
/// recorded and never abort the batch.
pub fn expand_batch(
    chains: &[NarrativeChain],
    corpus: &Corpus,
    generator: Option<&dyn GenerationProvider>,
    cache: Option<&DiskCache>,
    config: &ExpansionConfig,
) -> Result<ExpansionRun> {
    let counters = ExpansionCounters::default();
    let one = |chain: &NarrativeChain| -> Result<ExpandedChain> {
        match config.method {
            ExpansionMethod::Template => Ok(expand_template(chain)),
            ExpansionMethod::Llm => {
                let generator =
                    generator.ok_or_else(|| Error::Precondition("llm expansion needs a generation provider".into()))?;
                let doc = corpus
                    .get(&chain.doc_id)
                    .ok_or_else(|| Error::Precondition(format!("unknown document {}", chain.doc_id)))?;
                expand_llm(chain, &doc.text, generator, cache, config, &counters)
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
    let results: Vec<Result<ExpandedChain>> = pool.install(|| chains.par_iter().map(one).collect());
    let mut run = ExpansionRun::default();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => run.expansions.push(e),
            Err(e) => {
                log::warn!("expansion {index} ({}) failed: {e}", chains[index].doc_id);
                run.failures.push(ExpansionFailure {
                    index,
                    doc_id: chains[index].doc_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    run.provider_calls = counters.provider_calls.into_inner();
    run.cache_hits = counters.cache_hits.into_inner();
    log::info!(
        "expanded {} chains ({} failed, {} provider calls, {} cache hits)",
        run.expansions.len(),
        run.failures.len(),
        run.provider_calls,
        run.cache_hits
    );
    Ok(run)
}

//! Event-centric narrative chains for media framing analysis.
//!
//! The pipeline extracts `(verb, object)` event mentions from dependency
//! parses, links event pairs with a temporal/causal relation classifier
//! trained on a distilled eventuality knowledge graph, expands each chain
//! into a sentence, clusters the sentence embeddings into narrative themes
//! and uses per-document cluster frequencies to predict and explain
//! article-level policy frames.

pub mod chains;
pub mod clustering;
pub mod conllu;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod expansion;
pub mod framing;
pub mod kg_distill;
pub mod nn;
pub mod providers;
pub mod relation_model;
pub mod rng;
pub mod store;

pub use error::{Error, Result};

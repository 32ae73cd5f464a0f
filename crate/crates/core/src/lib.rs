//! Refining polysemous knowledge-graph relations into fine-grained
//! sub-relations.
//!
//! Facts of one relation are grouped by the types of their head and tail
//! entities. A relation embedding model turns every fact into a relation
//! vector; type pairs are merged by semantic similarity, and the grouping
//! whose labels best agree with a clustering of those vectors (by
//! homogeneity) becomes the set of sub-relations.

pub mod classify;
pub mod clustering;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod kg;
pub mod matrix;
pub mod pipeline;
pub mod refine;
pub mod rewrite;
pub mod synth;
pub mod type_semantics;

pub use error::{Error, Result};

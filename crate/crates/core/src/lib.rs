//! Named entity linking against a knowledge base of multi-embedding entities.
//!
//! Each KB entity holds up to `N_E` medoid embeddings of its mentions, a
//! per-embedding threshold, an entity threshold and its surface names.
//! Mentions are matched to candidates sharing a surface word and linked by
//! the best ratio of dot product to threshold. The KB can adjust itself so
//! that namesake entities cannot link to each other, and the evaluation
//! harness measures linking errors under KB pollution.

pub mod adjust;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod kb;
pub mod link;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
pub use model::{BuildParams, Embedding, EvalReport, KbEntity, KnowledgeBase, LinkOutcome, LinkResult, MentionRecord};

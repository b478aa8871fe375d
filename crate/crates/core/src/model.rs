//! Domain types shared across the toolkit.
//!
//! Every vector stored in a knowledge base or carried by a mention is a unit
//! direction together with the magnitude it had before normalization. Only the
//! direction takes part in similarity computations; the magnitude is kept for
//! diagnostics and is persisted with the KB.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero vectors.
pub const MIN_NORM: f64 = 1e-12;

/// Cap on the number of similar-entity references kept per entity.
pub const DEFAULT_MAX_SIMILAR: usize = 10;

/// A unit-length direction plus its pre-normalization Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    direction: Vec<f64>,
    norm: f64,
}

impl Embedding {
    /// Normalizes `raw`. When `expected_dim` is given the length must match.
    pub fn normalize(raw: &[f64], expected_dim: Option<usize>) -> Result<Self> {
        if let Some(expected) = expected_dim {
            if raw.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: raw.len(),
                });
            }
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm <= MIN_NORM {
            return Err(Error::ZeroVector { norm });
        }
        Ok(Self {
            direction: raw.iter().map(|x| x / norm).collect(),
            norm,
        })
    }

    /// Wraps an already unit-length direction, re-normalizing to absorb
    /// rounding drift. The recorded norm is the one supplied by the caller.
    pub fn from_unit(direction: Vec<f64>, norm: f64) -> Result<Self> {
        let mut e = Self::normalize(&direction, None)?;
        e.norm = norm;
        Ok(e)
    }

    /// Reassembles a stored embedding without touching its bits. The
    /// direction must already be unit length within 1e-6.
    pub fn from_parts(direction: Vec<f64>, norm: f64) -> Result<Self> {
        let len = dot(&direction, &direction).sqrt();
        if len.is_nan() || (len - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParam(format!("stored direction has length {len}")));
        }
        if !norm.is_finite() || norm <= MIN_NORM {
            return Err(Error::ZeroVector { norm });
        }
        Ok(Self { direction, norm })
    }

    /// The vector before normalization, up to rounding.
    pub fn raw(&self) -> Vec<f64> {
        self.direction.iter().map(|x| x * self.norm).collect()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        dot(&self.direction, &other.direction)
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.direction
    }
}

/// Plain dot product. Slices must have equal length.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One observed mention of a named entity.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionRecord {
    pub mention_id: String,
    pub surface: String,
    pub embedding: Embedding,
    pub gold_entity_id: Option<String>,
    /// Explicitly marked as having no counterpart in the KB.
    pub stranger: bool,
    pub source: String,
}

/// Parameters controlling how a KB is built from mentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildParams {
    /// Minimum number of mentions needed to create an entity (M).
    pub min_mentions: usize,
    /// Maximum number of stored embeddings per entity (N_E).
    pub max_embeddings: usize,
    /// Maximum number of similar-entity references (N_S).
    pub max_similar: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            min_mentions: 10,
            max_embeddings: 4,
            max_similar: DEFAULT_MAX_SIMILAR,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_embeddings < 2 {
            return Err(Error::InvalidParam(format!(
                "max_embeddings must be at least 2, got {}",
                self.max_embeddings
            )));
        }
        Ok(())
    }
}

/// A knowledge-base entity represented by a small set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KbEntity {
    pub entity_id: String,
    pub embeddings: Vec<Embedding>,
    /// Per-embedding thresholds, aligned with `embeddings`; -1 until adjusted.
    pub thresholds: Vec<f64>,
    /// Entity threshold T.
    pub entity_threshold: f64,
    pub surface_names: BTreeSet<String>,
    /// Surface-similar entities, most similar first.
    pub similar: Vec<String>,
    /// Embeddings as built, kept once rotation adjustment has modified them.
    pub original_embeddings: Option<Vec<Embedding>>,
}

/// Entity store plus the word to entities inverted index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub entities: BTreeMap<String, KbEntity>,
    pub word_index: BTreeMap<String, BTreeSet<String>>,
    pub params: BuildParams,
    /// Embedding dimension; `None` for an empty KB.
    pub dim: Option<usize>,
    pub adjusted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "outcome", content = "entity_id")]
pub enum LinkOutcome {
    Linked(String),
    Unlinked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkResult {
    pub mention_id: String,
    pub outcome: LinkOutcome,
    /// Best similarity among candidates, absent when there were none.
    pub best_similarity: Option<f64>,
    pub num_candidates: usize,
}

impl LinkResult {
    pub fn linked_entity(&self) -> Option<&str> {
        match &self.outcome {
            LinkOutcome::Linked(id) => Some(id),
            LinkOutcome::Unlinked => None,
        }
    }
}

/// Error counts and fractions for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_familiar: usize,
    pub n_stranger: usize,
    pub n_familiar_wrong: usize,
    pub n_familiar_unlinked: usize,
    pub n_stranger_linked: usize,
    pub f_fw: Option<f64>,
    pub f_fn: Option<f64>,
    pub f_sl: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(
        n_familiar: usize,
        n_stranger: usize,
        n_familiar_wrong: usize,
        n_familiar_unlinked: usize,
        n_stranger_linked: usize,
    ) -> Self {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        Self {
            n_familiar,
            n_stranger,
            n_familiar_wrong,
            n_familiar_unlinked,
            n_stranger_linked,
            f_fw: ratio(n_familiar_wrong, n_familiar),
            f_fn: ratio(n_familiar_unlinked, n_familiar),
            f_sl: ratio(n_stranger_linked, n_stranger),
        }
    }
}

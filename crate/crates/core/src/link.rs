//! Mention linking: surface-word candidate retrieval, max-ratio similarity,
//! and the global linking threshold.

use std::collections::BTreeSet;

use crate::kb::tokenize;
use crate::model::{dot, KbEntity, KnowledgeBase, LinkOutcome, LinkResult, MentionRecord};

/// Lower clamp on similarity denominators. Entity thresholds can be zero or
/// negative for entities with near-orthogonal embeddings.
pub const DEFAULT_DENOM_FLOOR: f64 = 0.05;

/// Entities reachable from any word of `surface`.
pub fn candidates<'a>(kb: &'a KnowledgeBase, surface: &str) -> BTreeSet<&'a str> {
    let mut out = BTreeSet::new();
    for word in tokenize(surface) {
        if let Some(ids) = kb.word_index.get(&word) {
            out.extend(ids.iter().map(String::as_str));
        }
    }
    out
}

/// Effective denominator for embedding `i` of an entity.
#[inline]
pub fn denominator(entity_threshold: f64, embedding_threshold: f64, floor: f64) -> f64 {
    entity_threshold.max(embedding_threshold).max(floor)
}

/// `max_i (e . e_i) / max(T, t_i, floor)` over the entity's embeddings.
pub fn similarity(entity: &KbEntity, direction: &[f64], floor: f64) -> f64 {
    entity
        .embeddings
        .iter()
        .zip(&entity.thresholds)
        .map(|(e_i, &t_i)| dot(direction, e_i.direction()) / denominator(entity.entity_threshold, t_i, floor))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Links mentions against a fixed KB.
#[derive(Debug, Clone, Copy)]
pub struct Linker<'a> {
    kb: &'a KnowledgeBase,
    denom_floor: f64,
}

impl<'a> Linker<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Self::with_floor(kb, DEFAULT_DENOM_FLOOR)
    }

    pub fn with_floor(kb: &'a KnowledgeBase, denom_floor: f64) -> Self {
        Self { kb, denom_floor }
    }

    pub fn kb(&self) -> &'a KnowledgeBase {
        self.kb
    }

    /// Best-scoring candidate and its similarity, regardless of threshold.
    /// Equal scores resolve to the smallest entity id.
    pub fn best(&self, surface: &str, direction: &[f64]) -> (Option<(&'a str, f64)>, usize) {
        let cands = candidates(self.kb, surface);
        let n = cands.len();
        let mut best: Option<(&'a str, f64)> = None;
        for id in cands {
            let s = similarity(&self.kb.entities[id], direction, self.denom_floor);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((id, s));
            }
        }
        (best, n)
    }

    pub fn link(&self, mention: &MentionRecord, link_threshold: f64) -> LinkResult {
        let (best, num_candidates) = self.best(&mention.surface, mention.embedding.direction());
        let outcome = match best {
            Some((id, s)) if s >= link_threshold => LinkOutcome::Linked(id.to_string()),
            _ => LinkOutcome::Unlinked,
        };
        LinkResult {
            mention_id: mention.mention_id.clone(),
            outcome,
            best_similarity: best.map(|(_, s)| s),
            num_candidates,
        }
    }

    /// Entities whose entity threshold falls below the floor.
    pub fn clamped_entities(&self) -> usize {
        self.kb
            .entities
            .values()
            .filter(|e| e.entity_threshold < self.denom_floor)
            .count()
    }
}

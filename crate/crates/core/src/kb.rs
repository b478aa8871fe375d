//! Knowledge-base construction: per-entity embedding reduction and
//! thresholds, the surface-word inverted index, and similar-entity wiring.

use std::collections::{BTreeMap, BTreeSet};

use crate::cluster::{agglomerate, medoid_indices};
use crate::error::{Error, Result};
use crate::model::{BuildParams, Embedding, KbEntity, KnowledgeBase, MentionRecord};

/// Why a mention group did not become an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Fewer mentions than `min_mentions`.
    TooFewMentions { count: usize, required: usize },
    /// Fewer than two embeddings, so no entity threshold can be defined.
    TooFewEmbeddings(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuildOutcome {
    Built(KbEntity),
    Rejected(RejectReason),
}

/// Counts gathered while building a KB.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildSummary {
    pub built: usize,
    pub rejected: Vec<(String, RejectReason)>,
    /// Entities whose entity threshold is not positive.
    pub nonpositive_threshold: Vec<String>,
}

/// Lowercased word tokens of a surface string. Every non-alphanumeric
/// character separates words; empty tokens are dropped.
pub fn tokenize(surface: &str) -> Vec<String> {
    surface
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn word_set(surface: &str) -> BTreeSet<String> {
    tokenize(surface).into_iter().collect()
}

/// `min_j max_{i != j} e_j . e_i`: the smallest best-neighbour dot product.
pub fn entity_threshold(embeddings: &[Embedding]) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::TooFewEmbeddings(n));
    }
    let mut best = vec![f64::NEG_INFINITY; n];
    for j in 0..n {
        for i in (j + 1)..n {
            let d = embeddings[j].dot(&embeddings[i]);
            best[j] = best[j].max(d);
            best[i] = best[i].max(d);
        }
    }
    Ok(best.into_iter().fold(f64::INFINITY, f64::min))
}

/// Sum of `1 - e_i . e_k` over unordered pairs `i < k`.
pub fn dissimilarity(embeddings: &[Embedding]) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::TooFewEmbeddings(n));
    }
    let mut total = 0.0;
    for i in 0..n {
        for k in (i + 1)..n {
            total += 1.0 - embeddings[i].dot(&embeddings[k]);
        }
    }
    Ok(total)
}

/// Builds one entity from its mentions, or says why it cannot be built.
///
/// Similar-entity references are left empty; they depend on the whole KB.
pub fn build_entity(entity_id: &str, mentions: &[MentionRecord], params: &BuildParams) -> BuildOutcome {
    let count = mentions.len();
    if count < params.min_mentions {
        return BuildOutcome::Rejected(RejectReason::TooFewMentions {
            count,
            required: params.min_mentions,
        });
    }
    if count < 2 {
        return BuildOutcome::Rejected(RejectReason::TooFewEmbeddings(count));
    }

    let all: Vec<&Embedding> = mentions.iter().map(|m| &m.embedding).collect();
    let embeddings: Vec<Embedding> = if count > params.max_embeddings {
        let points: Vec<&[f64]> = all.iter().map(|e| e.direction()).collect();
        let assignment = agglomerate(&points, params.max_embeddings).expect("2 <= max_embeddings < count");
        medoid_indices(&points, &assignment)
            .into_iter()
            .map(|i| all[i].clone())
            .collect()
    } else {
        all.into_iter().cloned().collect()
    };

    let entity_threshold = entity_threshold(&embeddings).expect("at least two embeddings");
    BuildOutcome::Built(KbEntity {
        entity_id: entity_id.to_string(),
        thresholds: vec![-1.0; embeddings.len()],
        embeddings,
        entity_threshold,
        surface_names: mentions.iter().map(|m| m.surface.clone()).collect(),
        similar: Vec::new(),
        original_embeddings: None,
    })
}

/// Maps every surface-name word to the entities using it.
pub fn build_word_index<'a, I>(entities: I) -> BTreeMap<String, BTreeSet<String>>
where
    I: IntoIterator<Item = &'a KbEntity>,
{
    let mut index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for entity in entities {
        for name in &entity.surface_names {
            for word in tokenize(name) {
                index.entry(word).or_default().insert(entity.entity_id.clone());
            }
        }
    }
    index
}

/// Surface similarity of `b` as seen from `a`.
///
/// For each surface name of `b`, sums the character counts of the distinct
/// words it shares with each surface name of `a`; the result is the maximum
/// of those sums over `b`'s names. Not symmetric.
pub fn surface_similarity(a: &KbEntity, b: &KbEntity) -> usize {
    let a_words: Vec<BTreeSet<String>> = a.surface_names.iter().map(|s| word_set(s)).collect();
    b.surface_names
        .iter()
        .map(|s_m| {
            let m_words = word_set(s_m);
            a_words
                .iter()
                .map(|k_words| k_words.intersection(&m_words).map(|w| w.chars().count()).sum::<usize>())
                .sum::<usize>()
        })
        .max()
        .unwrap_or(0)
}

/// Up to `max_similar` entities with the highest positive surface similarity
/// to `a`, ordered by descending similarity then ascending id.
pub fn select_similar(kb: &KnowledgeBase, a: &KbEntity) -> Vec<String> {
    let mut sharing: BTreeSet<&String> = BTreeSet::new();
    for name in &a.surface_names {
        for word in tokenize(name) {
            if let Some(ids) = kb.word_index.get(&word) {
                sharing.extend(ids.iter());
            }
        }
    }
    let mut scored: Vec<(usize, &String)> = sharing
        .into_iter()
        .filter(|id| **id != a.entity_id)
        .filter_map(|id| {
            let b = kb.entities.get(id)?;
            let l = surface_similarity(a, b);
            (l > 0).then_some((l, id))
        })
        .collect();
    scored.sort_by(|x, y| y.0.cmp(&x.0).then_with(|| x.1.cmp(y.1)));
    scored
        .into_iter()
        .take(kb.params.max_similar)
        .map(|(_, id)| id.clone())
        .collect()
}

impl KnowledgeBase {
    pub fn empty(params: BuildParams) -> Self {
        Self {
            entities: BTreeMap::new(),
            word_index: BTreeMap::new(),
            params,
            dim: None,
            adjusted: false,
        }
    }

    /// Builds a KB from mentions grouped by entity id.
    pub fn build(groups: &BTreeMap<String, Vec<MentionRecord>>, params: BuildParams) -> Result<(Self, BuildSummary)> {
        params.validate()?;
        let mut dim = None;
        for m in groups.values().flatten() {
            match dim {
                None => dim = Some(m.embedding.dim()),
                Some(d) if d != m.embedding.dim() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: m.embedding.dim(),
                    })
                }
                _ => {}
            }
        }

        let mut kb = Self::empty(params);
        kb.dim = dim;
        let mut summary = BuildSummary::default();
        for (id, mentions) in groups {
            match build_entity(id, mentions, &params) {
                BuildOutcome::Built(entity) => {
                    if entity.entity_threshold <= 0.0 {
                        summary.nonpositive_threshold.push(id.clone());
                    }
                    kb.entities.insert(id.clone(), entity);
                    summary.built += 1;
                }
                BuildOutcome::Rejected(reason) => summary.rejected.push((id.clone(), reason)),
            }
        }
        kb.rebuild_index();
        kb.wire_similar();
        Ok((kb, summary))
    }

    pub fn rebuild_index(&mut self) {
        self.word_index = build_word_index(self.entities.values());
    }

    /// Recomputes every entity's similar-entity list.
    pub fn wire_similar(&mut self) {
        let lists: Vec<(String, Vec<String>)> = self
            .entities
            .values()
            .map(|e| (e.entity_id.clone(), select_similar(self, e)))
            .collect();
        for (id, similar) in lists {
            self.entities.get_mut(&id).expect("entity exists").similar = similar;
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Checks structural invariants; returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.word_index != build_word_index(self.entities.values()) {
            return Err("word index does not match entity surface names".into());
        }
        for (id, e) in &self.entities {
            if &e.entity_id != id {
                return Err(format!("entity keyed `{id}` has id `{}`", e.entity_id));
            }
            if e.embeddings.len() < 2 || e.embeddings.len() > self.params.max_embeddings {
                return Err(format!("entity `{id}` has {} embeddings", e.embeddings.len()));
            }
            if e.embeddings.len() != e.thresholds.len() {
                return Err(format!("entity `{id}` thresholds misaligned"));
            }
            if let Some(d) = self.dim {
                if e.embeddings.iter().any(|x| x.dim() != d) {
                    return Err(format!("entity `{id}` has wrong embedding dimension"));
                }
            }
            if e.similar.len() > self.params.max_similar {
                return Err(format!("entity `{id}` has too many similar entities"));
            }
            if let Some(missing) = e.similar.iter().find(|s| !self.entities.contains_key(*s)) {
                return Err(format!("entity `{id}` refers to missing entity `{missing}`"));
            }
        }
        Ok(())
    }
}

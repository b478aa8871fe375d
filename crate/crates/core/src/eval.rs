//! Evaluation protocol: familiar/stranger partition, error fractions, KB
//! pollution and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjust::{adjust, AdjustmentConfig};
use crate::error::{Error, Result};
use crate::link::{Linker, DEFAULT_DENOM_FLOOR};
use crate::model::{BuildParams, EvalReport, KnowledgeBase, MentionRecord, DEFAULT_MAX_SIMILAR};

/// Splits mentions into those whose gold entity is in the KB and the rest.
///
/// Mentions explicitly marked as strangers are strangers regardless of their
/// gold id.
pub fn partition<'m>(
    kb: &KnowledgeBase,
    mentions: &'m [MentionRecord],
) -> Result<(Vec<&'m MentionRecord>, Vec<&'m MentionRecord>)> {
    let mut familiar = Vec::new();
    let mut stranger = Vec::new();
    for m in mentions {
        match (&m.gold_entity_id, m.stranger) {
            (_, true) => stranger.push(m),
            (Some(gold), false) if kb.entities.contains_key(gold) => familiar.push(m),
            (Some(_), false) => stranger.push(m),
            (None, false) => return Err(Error::MissingGold(m.mention_id.clone())),
        }
    }
    Ok((familiar, stranger))
}

/// Links every mention and counts the three kinds of error.
pub fn evaluate(
    kb: &KnowledgeBase,
    familiar: &[&MentionRecord],
    stranger: &[&MentionRecord],
    link_threshold: f64,
    denom_floor: f64,
) -> EvalReport {
    let linker = Linker::with_floor(kb, denom_floor);
    let mut wrong = 0;
    let mut unlinked = 0;
    for m in familiar {
        match linker.link(m, link_threshold).linked_entity() {
            None => unlinked += 1,
            Some(id) if Some(id) != m.gold_entity_id.as_deref() => wrong += 1,
            Some(_) => {}
        }
    }
    let stranger_linked = stranger
        .iter()
        .filter(|m| linker.link(m, link_threshold).linked_entity().is_some())
        .count();
    EvalReport::from_counts(familiar.len(), stranger.len(), wrong, unlinked, stranger_linked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PollutionConfig {
    /// Fraction of entities that receive wrong mentions.
    pub entity_fraction: f64,
    /// Wrong mentions added per polluted entity, as a fraction of its
    /// genuine mention count.
    pub mention_fraction: f64,
    /// Taken from the run-wide seed, never from a config file section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PollutionConfig {
    fn default() -> Self {
        Self {
            entity_fraction: 0.5,
            mention_fraction: 0.5,
            seed: 0,
        }
    }
}

impl PollutionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("entity_fraction", self.entity_fraction),
            ("mention_fraction", self.mention_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Adds wrong mentions to a seeded random subset of entities.
///
/// `round(entity_fraction * count)` entities are chosen. Each chosen entity
/// with `n` genuine mentions receives `floor(mention_fraction * n)` mentions
/// drawn without replacement from its wrong pool, or the whole pool if it is
/// smaller.
pub fn pollute(
    groups: &BTreeMap<String, Vec<MentionRecord>>,
    wrong_pools: &BTreeMap<String, Vec<MentionRecord>>,
    config: &PollutionConfig,
) -> BTreeMap<String, Vec<MentionRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ids: Vec<&String> = groups.keys().collect();
    let amount = ((config.entity_fraction * ids.len() as f64).round() as usize).min(ids.len());
    let mut chosen = index::sample(&mut rng, ids.len(), amount).into_vec();
    chosen.sort_unstable();

    let mut out = groups.clone();
    for idx in chosen {
        let id = ids[idx];
        let Some(pool) = wrong_pools.get(id) else {
            continue;
        };
        let genuine = groups[id].len();
        let wanted = (config.mention_fraction * genuine as f64).floor() as usize;
        let take = wanted.min(pool.len());
        if take == 0 {
            continue;
        }
        let mut picks = index::sample(&mut rng, pool.len(), take).into_vec();
        picks.sort_unstable();
        out.get_mut(id)
            .expect("chosen from groups")
            .extend(picks.into_iter().map(|p| pool[p].clone()));
    }
    out
}

/// Mentions for building a KB, mentions for evaluating it, and the wrong
/// mentions available for pollution.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub kb_groups: BTreeMap<String, Vec<MentionRecord>>,
    pub eval_mentions: Vec<MentionRecord>,
    pub wrong_pools: BTreeMap<String, Vec<MentionRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub m_values: Vec<usize>,
    pub ne_values: Vec<usize>,
    pub tl_values: Vec<f64>,
    pub pollution: Option<PollutionConfig>,
    pub adjust: Option<AdjustmentConfig>,
    pub max_similar: usize,
    pub denom_floor: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            m_values: (5..=10).collect(),
            ne_values: vec![4],
            tl_values: vec![0.825, 0.85, 0.875],
            pollution: None,
            adjust: None,
            max_similar: DEFAULT_MAX_SIMILAR,
            denom_floor: DEFAULT_DENOM_FLOOR,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.ne_values.is_empty() || self.tl_values.is_empty() {
            return Err(Error::InvalidParam("sweep value lists must be nonempty".into()));
        }
        if let Some(p) = &self.pollution {
            p.validate()?;
        }
        if let Some(a) = &self.adjust {
            a.validate()?;
        }
        for &ne in &self.ne_values {
            BuildParams {
                min_mentions: 1,
                max_embeddings: ne,
                max_similar: self.max_similar,
            }
            .validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Clean,
    Polluted,
    Adjusted,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Clean => "clean",
            Variant::Polluted => "polluted",
            Variant::Adjusted => "adjusted",
        })
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub min_mentions: usize,
    pub max_embeddings: usize,
    pub link_threshold: f64,
    pub kb_size: usize,
    pub report: EvalReport,
}

fn evaluate_grid(
    kb: &KnowledgeBase,
    eval_mentions: &[MentionRecord],
    variant: Variant,
    params: &BuildParams,
    spec: &SweepSpec,
    rows: &mut Vec<SweepRow>,
) -> Result<()> {
    let (familiar, stranger) = partition(kb, eval_mentions)?;
    for &tl in &spec.tl_values {
        rows.push(SweepRow {
            variant,
            min_mentions: params.min_mentions,
            max_embeddings: params.max_embeddings,
            link_threshold: tl,
            kb_size: kb.len(),
            report: evaluate(kb, &familiar, &stranger, tl, spec.denom_floor),
        });
    }
    Ok(())
}

/// Evaluates every `(M, N_E, T_L)` grid point.
///
/// The clean KB is always evaluated. With pollution configured a polluted KB
/// is rebuilt from scratch and evaluated as well. With adjustment configured
/// the polluted KB (or the clean one, without pollution) is adjusted and
/// evaluated. Rows come out grouped by `(M, N_E)` then variant then `T_L`.
pub fn sweep(dataset: &Dataset, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let polluted_groups = spec
        .pollution
        .as_ref()
        .map(|p| pollute(&dataset.kb_groups, &dataset.wrong_pools, p));

    let mut rows = Vec::new();
    for &m in &spec.m_values {
        for &ne in &spec.ne_values {
            let params = BuildParams {
                min_mentions: m,
                max_embeddings: ne,
                max_similar: spec.max_similar,
            };
            let (clean, _) = KnowledgeBase::build(&dataset.kb_groups, params)?;
            evaluate_grid(&clean, &dataset.eval_mentions, Variant::Clean, &params, spec, &mut rows)?;

            let mut base = match &polluted_groups {
                Some(groups) => {
                    let (polluted, _) = KnowledgeBase::build(groups, params)?;
                    evaluate_grid(
                        &polluted,
                        &dataset.eval_mentions,
                        Variant::Polluted,
                        &params,
                        spec,
                        &mut rows,
                    )?;
                    polluted
                }
                None => clean,
            };
            if let Some(cfg) = &spec.adjust {
                adjust(&mut base, cfg)?;
                evaluate_grid(
                    &base,
                    &dataset.eval_mentions,
                    Variant::Adjusted,
                    &params,
                    spec,
                    &mut rows,
                )?;
            }
        }
    }
    Ok(rows)
}

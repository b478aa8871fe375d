//! Seeded synthetic namesake benchmark.
//!
//! Each entity is a random unit "center" in `dim` dimensions. Its mentions
//! are the center plus isotropic Gaussian noise (standard deviation
//! `noise_scale` per coordinate), normalized. Entities draw their names from
//! a pool smaller than the number of entities, so most names are shared by
//! several entities. Pool names never share words with each other. A
//! fraction of entities is withheld from KB building; their evaluation
//! mentions are strangers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Dataset;
use crate::model::{Embedding, MentionRecord};

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ra", "ten", "vo", "su", "dar", "ne", "pi", "gor", "fa", "zu", "bel", "to", "shi", "mar", "en",
    "qu", "wy",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_entities: usize,
    /// Upper bound on KB-source mentions per entity; each entity draws its
    /// count uniformly from `2..=mentions_per_entity`.
    pub mentions_per_entity: usize,
    pub dim: usize,
    pub noise_scale: f64,
    pub surface_pool_size: usize,
    /// Fraction of entities withheld from the KB.
    pub stranger_fraction: f64,
    /// Evaluation mentions generated per entity.
    pub eval_mentions_per_entity: usize,
    /// Taken from the run-wide seed, never from a config file section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_entities: 100,
            mentions_per_entity: 16,
            dim: 32,
            noise_scale: 0.25,
            surface_pool_size: 20,
            stranger_fraction: 0.25,
            eval_mentions_per_entity: 4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::InvalidParam(format!(
                "synthetic dim must be >= 8, got {}",
                self.dim
            )));
        }
        if !self.noise_scale.is_finite() || self.noise_scale <= 0.0 {
            return Err(Error::InvalidParam("noise_scale must be positive".into()));
        }
        if self.surface_pool_size == 0 || self.n_entities == 0 {
            return Err(Error::InvalidParam(
                "n_entities and surface_pool_size must be positive".into(),
            ));
        }
        if self.mentions_per_entity < 2 {
            return Err(Error::InvalidParam("mentions_per_entity must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.stranger_fraction) {
            return Err(Error::InvalidParam("stranger_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Generated benchmark data.
#[derive(Debug, Clone, Default)]
pub struct SynthDataset {
    /// KB-source mentions of non-withheld entities, by entity id.
    pub kb_groups: BTreeMap<String, Vec<MentionRecord>>,
    /// Evaluation mentions of non-withheld entities. They are familiar unless
    /// their entity is rejected at build time.
    pub familiar: Vec<MentionRecord>,
    /// Evaluation mentions of withheld entities.
    pub stranger: Vec<MentionRecord>,
    /// For each KB-source entity, mentions of other entities with the same name.
    pub wrong_pools: BTreeMap<String, Vec<MentionRecord>>,
}

impl SynthDataset {
    pub fn into_dataset(self) -> Dataset {
        let mut eval_mentions = self.familiar;
        eval_mentions.extend(self.stranger);
        Dataset {
            kb_groups: self.kb_groups,
            eval_mentions,
            wrong_pools: self.wrong_pools,
        }
    }
}

fn word(mut n: usize) -> String {
    // Bijective base-20 numeral over syllables, so distinct n give distinct words.
    let mut out = String::new();
    loop {
        out.push_str(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
        if n == 0 {
            break;
        }
        n -= 1;
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Names for the pool, as (given name, family name). No word is reused.
pub fn name_pool(size: usize) -> Vec<(String, String)> {
    (0..size)
        .map(|i| (capitalize(&word(2 * i)), capitalize(&word(2 * i + 1))))
        .collect()
}

fn gaussian_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
            return Embedding::normalize(&v, None).expect("nonzero").direction().to_vec();
        }
    }
}

struct EntitySpec {
    id: String,
    center: Vec<f64>,
    name: usize,
    withheld: bool,
    kb_count: usize,
}

/// Generates a benchmark. Identical configs give identical output.
pub fn synth_namesakes(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pool = name_pool(config.surface_pool_size);
    let width = config.n_entities.to_string().len();

    let withheld_count = (config.stranger_fraction * config.n_entities as f64).round() as usize;
    let mut order: Vec<usize> = (0..config.n_entities).collect();
    order.shuffle(&mut rng);
    let mut withheld = vec![false; config.n_entities];
    for &i in &order[..withheld_count] {
        withheld[i] = true;
    }

    let specs: Vec<EntitySpec> = (0..config.n_entities)
        .map(|i| EntitySpec {
            id: format!("E{i:0width$}"),
            center: gaussian_unit(&mut rng, config.dim),
            name: i % config.surface_pool_size,
            withheld: withheld[i],
            kb_count: rng.random_range(2..=config.mentions_per_entity),
        })
        .collect();

    let noise = rand_distr::Normal::new(0.0, config.noise_scale).expect("positive scale");
    let sample_mentions = |spec: &EntitySpec, count: usize, tag: &str, rng: &mut ChaCha8Rng| {
        (0..count)
            .map(|k| {
                let raw: Vec<f64> = spec.center.iter().map(|c| c + noise.sample(rng)).collect();
                let (given, family) = &pool[spec.name];
                let surface = if rng.random_bool(0.7) {
                    format!("{given} {family}")
                } else {
                    family.clone()
                };
                MentionRecord {
                    mention_id: format!("{}-{tag}-{k}", spec.id),
                    surface,
                    embedding: Embedding::normalize(&raw, None).expect("noise never cancels center exactly"),
                    gold_entity_id: Some(spec.id.clone()),
                    stranger: false,
                    source: "synthetic".into(),
                }
            })
            .collect::<Vec<_>>()
    };

    let mut kb_source: Vec<Vec<MentionRecord>> = Vec::with_capacity(specs.len());
    let mut eval: Vec<Vec<MentionRecord>> = Vec::with_capacity(specs.len());
    for spec in &specs {
        kb_source.push(sample_mentions(spec, spec.kb_count, "kb", &mut rng));
        eval.push(sample_mentions(spec, config.eval_mentions_per_entity, "ev", &mut rng));
    }

    let mut out = SynthDataset::default();
    for (i, spec) in specs.iter().enumerate() {
        if spec.withheld {
            out.stranger.extend(eval[i].iter().cloned());
            continue;
        }
        out.kb_groups.insert(spec.id.clone(), kb_source[i].clone());
        out.familiar.extend(eval[i].iter().cloned());
        let wrong: Vec<MentionRecord> = specs
            .iter()
            .enumerate()
            .filter(|(j, other)| *j != i && other.name == spec.name)
            .flat_map(|(j, _)| kb_source[j].iter().cloned())
            .collect();
        if !wrong.is_empty() {
            out.wrong_pools.insert(spec.id.clone(), wrong);
        }
    }
    Ok(out)
}

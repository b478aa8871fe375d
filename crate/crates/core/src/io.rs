//! File formats.
//!
//! Mention files are line-delimited JSON, one record per line:
//!
//! ```json
//! {"mention_id":"m1","surface":"John Smith","gold_entity_id":"Q1","source":"news","embedding":[0.1,0.2]}
//! ```
//!
//! `gold_entity_id` and `stranger` are optional; embeddings are raw (not
//! necessarily unit length) and must all share one dimension. Unknown fields
//! are rejected.
//!
//! A KB file is a single JSON document with a `format_version`, the build
//! parameters and one block per entity. Floats are written in shortest
//! round-trip form and parsed exactly, so a KB survives save/load bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BuildParams, Embedding, KbEntity, KnowledgeBase, LinkOutcome, LinkResult, MentionRecord};

pub const KB_FORMAT_VERSION: u32 = 1;

fn is_false(b: &bool) -> bool {
    !*b
}

/// One line of a mention file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MentionLine {
    pub mention_id: String,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entity_id: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub stranger: bool,
    pub source: String,
    pub embedding: Vec<f64>,
}

impl From<&MentionRecord> for MentionLine {
    fn from(m: &MentionRecord) -> Self {
        Self {
            mention_id: m.mention_id.clone(),
            surface: m.surface.clone(),
            gold_entity_id: m.gold_entity_id.clone(),
            stranger: m.stranger,
            source: m.source.clone(),
            embedding: m.embedding.raw(),
        }
    }
}

/// Reads a mention file. Errors carry the 1-based line number.
pub fn read_mentions<R: BufRead>(reader: R) -> Result<Vec<MentionRecord>> {
    let mut out = Vec::new();
    let mut dim = None;
    let mut ids = BTreeSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let rec: MentionLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.mention_id.is_empty() {
            return Err(parse_err("empty mention_id".into()));
        }
        if rec.surface.trim().is_empty() {
            return Err(parse_err("empty surface".into()));
        }
        if !ids.insert(rec.mention_id.clone()) {
            return Err(parse_err(format!("duplicate mention_id `{}`", rec.mention_id)));
        }
        let embedding = Embedding::normalize(&rec.embedding, dim).map_err(|e| parse_err(e.to_string()))?;
        dim.get_or_insert(embedding.dim());
        out.push(MentionRecord {
            mention_id: rec.mention_id,
            surface: rec.surface,
            embedding,
            gold_entity_id: rec.gold_entity_id,
            stranger: rec.stranger,
            source: rec.source,
        });
    }
    Ok(out)
}

pub fn write_mentions<'a, W, I>(mut writer: W, mentions: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a MentionRecord>,
{
    for m in mentions {
        serde_json::to_writer(&mut writer, &MentionLine::from(m))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Groups mentions with a gold id by that id. Strangers and mentions without
/// a gold id are returned separately.
pub fn group_by_gold(mentions: Vec<MentionRecord>) -> (BTreeMap<String, Vec<MentionRecord>>, Vec<MentionRecord>) {
    let mut groups: BTreeMap<String, Vec<MentionRecord>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for m in mentions {
        match (&m.gold_entity_id, m.stranger) {
            (Some(id), false) => groups.entry(id.clone()).or_default().push(m),
            _ => skipped.push(m),
        }
    }
    (groups, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityBlock {
    entity_id: String,
    surface_names: Vec<String>,
    embeddings: Vec<Vec<f64>>,
    norms: Vec<f64>,
    thresholds: Vec<f64>,
    entity_threshold: f64,
    similar: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_norms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KbFile {
    format_version: u32,
    params: BuildParams,
    dim: Option<usize>,
    adjusted: bool,
    entities: Vec<EntityBlock>,
}

fn split(embeddings: &[Embedding]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        embeddings.iter().map(|e| e.direction().to_vec()).collect(),
        embeddings.iter().map(Embedding::norm).collect(),
    )
}

fn join(id: &str, dirs: Vec<Vec<f64>>, norms: Vec<f64>) -> Result<Vec<Embedding>> {
    if dirs.len() != norms.len() {
        return Err(Error::CorruptKb(format!(
            "entity `{id}`: embeddings and norms differ in count"
        )));
    }
    dirs.into_iter()
        .zip(norms)
        .map(|(d, n)| Embedding::from_parts(d, n).map_err(|e| Error::CorruptKb(format!("entity `{id}`: {e}"))))
        .collect()
}

impl From<&KbEntity> for EntityBlock {
    fn from(e: &KbEntity) -> Self {
        let (embeddings, norms) = split(&e.embeddings);
        let (original_embeddings, original_norms) = match &e.original_embeddings {
            Some(orig) => {
                let (d, n) = split(orig);
                (Some(d), Some(n))
            }
            None => (None, None),
        };
        Self {
            entity_id: e.entity_id.clone(),
            surface_names: e.surface_names.iter().cloned().collect(),
            embeddings,
            norms,
            thresholds: e.thresholds.clone(),
            entity_threshold: e.entity_threshold,
            similar: e.similar.clone(),
            original_embeddings,
            original_norms,
        }
    }
}

pub fn write_kb<W: Write>(mut writer: W, kb: &KnowledgeBase) -> Result<()> {
    let file = KbFile {
        format_version: KB_FORMAT_VERSION,
        params: kb.params,
        dim: kb.dim,
        adjusted: kb.adjusted,
        entities: kb.entities.values().map(EntityBlock::from).collect(),
    };
    serde_json::to_writer_pretty(&mut writer, &file)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn kb_to_string(kb: &KnowledgeBase) -> String {
    let mut buf = Vec::new();
    write_kb(&mut buf, kb).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Reads and validates a KB file; the word index is rebuilt.
pub fn read_kb<R: std::io::Read>(reader: R) -> Result<KnowledgeBase> {
    let file: KbFile = serde_json::from_reader(reader).map_err(|e| Error::CorruptKb(e.to_string()))?;
    if file.format_version != KB_FORMAT_VERSION {
        return Err(Error::CorruptKb(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    let mut kb = KnowledgeBase::empty(file.params);
    kb.dim = file.dim;
    kb.adjusted = file.adjusted;
    for block in file.entities {
        let id = block.entity_id;
        let embeddings = join(&id, block.embeddings, block.norms)?;
        let original_embeddings = match (block.original_embeddings, block.original_norms) {
            (Some(d), Some(n)) => Some(join(&id, d, n)?),
            (None, None) => None,
            _ => {
                return Err(Error::CorruptKb(format!(
                    "entity `{id}`: original embeddings without norms"
                )))
            }
        };
        let entity = KbEntity {
            entity_id: id.clone(),
            embeddings,
            thresholds: block.thresholds,
            entity_threshold: block.entity_threshold,
            surface_names: block.surface_names.into_iter().collect(),
            similar: block.similar,
            original_embeddings,
        };
        if kb.entities.insert(id.clone(), entity).is_some() {
            return Err(Error::CorruptKb(format!("duplicate entity `{id}`")));
        }
    }
    kb.rebuild_index();
    kb.check_invariants().map_err(Error::CorruptKb)?;
    Ok(kb)
}

/// One line of `link` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkLine {
    pub mention_id: String,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entity_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    pub candidates: usize,
}

impl From<&LinkResult> for LinkLine {
    fn from(r: &LinkResult) -> Self {
        let (outcome, entity_id) = match &r.outcome {
            LinkOutcome::Linked(id) => ("linked", Some(id.clone())),
            LinkOutcome::Unlinked => ("unlinked", None),
        };
        Self {
            mention_id: r.mention_id.clone(),
            outcome: outcome.into(),
            entity_id,
            similarity: r.best_similarity,
            candidates: r.num_candidates,
        }
    }
}

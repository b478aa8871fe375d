//! KB self-adjustment against namesake collisions, using only KB data.
//!
//! Each entity `E_a` is visited in descending dissimilarity order. For every
//! surface-similar entity `E_b` and every pair of embeddings `(e_i, e_j)`
//! from `E_a` and `E_b`, a dot product above the effective threshold is a
//! conflict. Threshold mode raises the per-embedding threshold to `c` times
//! the dot product, on both sides. Rotation mode instead turns `e_i` away
//! from `e_j` inside their common plane until the dot product is `T / c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{dissimilarity, entity_threshold};
use crate::model::{dot, Embedding, KnowledgeBase};

/// Dot products this close to +-1 are treated as parallel.
pub const PARALLEL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMode {
    Thresholds,
    Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjustmentConfig {
    pub mode: AdjustMode,
    pub c: f64,
    pub iterative: bool,
    pub max_passes: usize,
    pub pass_change_limit: usize,
}

impl Default for AdjustmentConfig {
    fn default() -> Self {
        Self {
            mode: AdjustMode::Thresholds,
            c: 1.01,
            iterative: false,
            max_passes: 20,
            pass_change_limit: 0,
        }
    }
}

impl AdjustmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() || self.c <= 1.0 {
            return Err(Error::InvalidParam(format!("adjustment c must be > 1, got {}", self.c)));
        }
        if self.max_passes == 0 {
            return Err(Error::InvalidParam("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// What one adjustment pass did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PassStats {
    pub changes: usize,
    /// Rotation conflicts skipped because the pair was (anti)parallel.
    pub degenerate: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AdjustReport {
    pub passes: Vec<PassStats>,
}

impl AdjustReport {
    pub fn total_changes(&self) -> usize {
        self.passes.iter().map(|p| p.changes).sum()
    }
}

/// Entity ids in adjustment order: descending dissimilarity, then ascending id.
pub fn visit_order(kb: &KnowledgeBase) -> Vec<String> {
    let mut order: Vec<(f64, &String)> = kb
        .entities
        .iter()
        .map(|(id, e)| (dissimilarity(&e.embeddings).unwrap_or(0.0), id))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(y.1)));
    order.into_iter().map(|(_, id)| id.clone()).collect()
}

/// One pass of threshold adjustment. Returns the number of thresholds raised.
///
/// A triggered update never lowers a threshold: the new value is `c * dot`
/// only when that exceeds the current one. For positive dot products this is
/// always the case.
pub fn adjust_thresholds(kb: &mut KnowledgeBase, config: &AdjustmentConfig) -> usize {
    let c = config.c;
    let mut changes = 0;
    for a_id in visit_order(kb) {
        let similar = kb.entities[&a_id].similar.clone();
        for b_id in similar {
            if b_id == a_id {
                continue;
            }
            let Some(mut b) = kb.entities.remove(&b_id) else {
                continue;
            };
            let a = kb.entities.get_mut(&a_id).expect("entity being visited exists");
            for i in 0..a.embeddings.len() {
                for j in 0..b.embeddings.len() {
                    let d = a.embeddings[i].dot(&b.embeddings[j]);
                    if d > a.entity_threshold.max(a.thresholds[i]) && c * d > a.thresholds[i] {
                        a.thresholds[i] = c * d;
                        changes += 1;
                    }
                    if d > b.entity_threshold.max(b.thresholds[j]) && c * d > b.thresholds[j] {
                        b.thresholds[j] = c * d;
                        changes += 1;
                    }
                }
            }
            kb.entities.insert(b_id, b);
        }
    }
    if changes > 0 {
        kb.adjusted = true;
    }
    changes
}

/// Rotates `e_i` in the plane of `e_i` and `e_j`, away from `e_j`, so that
/// the new dot product with `e_j` equals `threshold / c`.
///
/// Requires the current dot product to exceed the target.
pub fn rotate_away(e_i: &[f64], e_j: &[f64], threshold: f64, c: f64) -> Result<Vec<f64>> {
    let s = dot(e_i, e_j);
    let target = threshold / c;
    if s.abs() >= 1.0 - PARALLEL_EPS {
        return Err(Error::DegenerateParallel(s));
    }
    if s.is_nan() || s <= target {
        return Err(Error::NoConflict { dot: s, target });
    }
    // Orthonormal basis {e_i, u} of the plane; e_j = s e_i + sqrt(1 - s^2) u.
    let mut u: Vec<f64> = e_j.iter().zip(e_i).map(|(j, i)| j - s * i).collect();
    let u_norm = dot(&u, &u).sqrt();
    u.iter_mut().for_each(|x| *x /= u_norm);

    // With phi the angle from e_i to e_j, cos(alpha - phi) = target; pick the
    // smaller rotation, which moves away from e_j (alpha < 0).
    let phi = s.clamp(-1.0, 1.0).acos();
    let alpha = phi - target.clamp(-1.0, 1.0).acos();
    let (sin_a, cos_a) = alpha.sin_cos();
    let mut out: Vec<f64> = e_i.iter().zip(&u).map(|(i, u)| cos_a * i + sin_a * u).collect();
    let n = dot(&out, &out).sqrt();
    out.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

/// One pass of rotation adjustment. Entity thresholds are held fixed during
/// the pass and recomputed at its end for entities that were rotated.
pub fn adjust_rotation(kb: &mut KnowledgeBase, config: &AdjustmentConfig) -> PassStats {
    let c = config.c;
    let mut stats = PassStats::default();
    let mut touched = Vec::new();
    for a_id in visit_order(kb) {
        let similar = kb.entities[&a_id].similar.clone();
        for b_id in similar {
            if b_id == a_id {
                continue;
            }
            let Some(b) = kb.entities.remove(&b_id) else {
                continue;
            };
            let a = kb.entities.get_mut(&a_id).expect("entity being visited exists");
            let mut rotated = false;
            for i in 0..a.embeddings.len() {
                for e_j in &b.embeddings {
                    let d = a.embeddings[i].dot(e_j);
                    if d <= a.entity_threshold.max(a.thresholds[i]) {
                        continue;
                    }
                    match rotate_away(a.embeddings[i].direction(), e_j.direction(), a.entity_threshold, c) {
                        Ok(dir) => {
                            if a.original_embeddings.is_none() {
                                a.original_embeddings = Some(a.embeddings.clone());
                            }
                            let norm = a.embeddings[i].norm();
                            a.embeddings[i] = Embedding::from_unit(dir, norm).expect("rotation keeps unit length");
                            stats.changes += 1;
                            rotated = true;
                        }
                        Err(Error::DegenerateParallel(_)) => stats.degenerate += 1,
                        // Only reachable when the target exceeds the trigger,
                        // i.e. a negative threshold; nothing to rotate.
                        Err(_) => {}
                    }
                }
            }
            if rotated {
                touched.push(a_id.clone());
            }
            kb.entities.insert(b_id, b);
        }
    }
    touched.sort();
    touched.dedup();
    for id in touched {
        let e = kb.entities.get_mut(&id).expect("rotated entity exists");
        e.entity_threshold = entity_threshold(&e.embeddings).expect("entities keep >= 2 embeddings");
    }
    if stats.changes > 0 {
        kb.adjusted = true;
    }
    stats
}

fn single_pass(kb: &mut KnowledgeBase, config: &AdjustmentConfig) -> PassStats {
    match config.mode {
        AdjustMode::Thresholds => PassStats {
            changes: adjust_thresholds(kb, config),
            degenerate: 0,
        },
        AdjustMode::Rotation => adjust_rotation(kb, config),
    }
}

/// Repeats single passes until one makes at most `pass_change_limit` changes
/// or `max_passes` is reached.
pub fn adjust_iterative(kb: &mut KnowledgeBase, config: &AdjustmentConfig) -> AdjustReport {
    let mut report = AdjustReport::default();
    for _ in 0..config.max_passes {
        let stats = single_pass(kb, config);
        report.passes.push(stats);
        if stats.changes <= config.pass_change_limit {
            break;
        }
    }
    report
}

/// Runs the adjustment the config asks for: one pass, or iterated passes.
pub fn adjust(kb: &mut KnowledgeBase, config: &AdjustmentConfig) -> Result<AdjustReport> {
    config.validate()?;
    let report = if config.iterative {
        adjust_iterative(kb, config)
    } else {
        AdjustReport {
            passes: vec![single_pass(kb, config)],
        }
    };
    kb.adjusted = true;
    Ok(report)
}

/// Restores the embeddings an entity had before rotation and clears all
/// per-embedding thresholds.
pub fn undo(kb: &mut KnowledgeBase) {
    for e in kb.entities.values_mut() {
        if let Some(orig) = e.original_embeddings.take() {
            e.embeddings = orig;
            e.entity_threshold = entity_threshold(&e.embeddings).expect("entities keep >= 2 embeddings");
        }
        e.thresholds.iter_mut().for_each(|t| *t = -1.0);
    }
    kb.adjusted = false;
}

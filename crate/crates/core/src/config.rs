//! Run configuration.
//!
//! Values come from defaults, then an optional TOML file, then command-line
//! flags, each layer overriding the previous one. Unknown keys in the file
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjust::AdjustmentConfig;
use crate::error::{Error, Result};
use crate::eval::{PollutionConfig, SweepSpec};
use crate::link::DEFAULT_DENOM_FLOOR;
use crate::model::BuildParams;
use crate::synth::SynthConfig;

/// Sweep grid and which variants to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub m_values: Vec<usize>,
    pub ne_values: Vec<usize>,
    pub tl_values: Vec<f64>,
    pub pollute: bool,
    pub adjust: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let spec = SweepSpec::default();
        Self {
            m_values: spec.m_values,
            ne_values: spec.ne_values,
            tl_values: spec.tl_values,
            pollute: false,
            adjust: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub min_mentions: usize,
    pub max_embeddings: usize,
    pub max_similar: usize,
    pub link_threshold: f64,
    pub denom_floor: f64,
    pub seed: u64,
    pub adjust: AdjustmentConfig,
    pub pollution: PollutionConfig,
    pub sweep: SweepSection,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = BuildParams::default();
        Self {
            min_mentions: params.min_mentions,
            max_embeddings: params.max_embeddings,
            max_similar: params.max_similar,
            link_threshold: 0.85,
            denom_floor: DEFAULT_DENOM_FLOOR,
            seed: 0,
            adjust: AdjustmentConfig::default(),
            pollution: PollutionConfig::default(),
            sweep: SweepSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn build_params(&self) -> BuildParams {
        BuildParams {
            min_mentions: self.min_mentions,
            max_embeddings: self.max_embeddings,
            max_similar: self.max_similar,
        }
    }

    /// Pollution settings with the run-wide seed applied.
    pub fn pollution(&self) -> PollutionConfig {
        PollutionConfig {
            seed: self.seed,
            ..self.pollution
        }
    }

    /// Synthetic generator settings with the run-wide seed applied.
    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            m_values: self.sweep.m_values.clone(),
            ne_values: self.sweep.ne_values.clone(),
            tl_values: self.sweep.tl_values.clone(),
            pollution: self.sweep.pollute.then(|| self.pollution()),
            adjust: self.sweep.adjust.then_some(self.adjust),
            max_similar: self.max_similar,
            denom_floor: self.denom_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.build_params().validate()?;
        self.adjust.validate()?;
        self.pollution.validate()?;
        if !self.link_threshold.is_finite() {
            return Err(Error::InvalidParam("link_threshold must be finite".into()));
        }
        if !self.denom_floor.is_finite() || self.denom_floor <= 0.0 {
            return Err(Error::InvalidParam("denom_floor must be positive".into()));
        }
        Ok(())
    }
}

use std::path::Path;

use dgcan_core::harness::{InferenceConfig, TrainConfig};
use dgcan_core::metrics::EvalConfig;
use dgcan_core::net::ModelConfig;
use dgcan_core::scene::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, DatasetPlan};
use crate::error::Result;

/// Everything a command can be configured with; missing sections take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
    pub dataset: DatasetPlan,
    /// Checkpoint interval in iterations; 0 saves only the final one.
    pub checkpoint_every: usize,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            Some(p) => read_json(p)?,
            None => Self::default(),
        };
        cfg.model.validate()?;
        cfg.train.validate()?;
        cfg.inference.validate()?;
        cfg.eval.validate()?;
        Ok(cfg)
    }
}

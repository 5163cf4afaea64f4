use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustic::SynthesizerConfig;
use crate::enhance::EnhanceConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;
use crate::vocoder::TemperaturePolicy;

/// Optional TOML run configuration; every section falls back to defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Reject weight files containing unknown tensor names.
    pub strict_weights: bool,
    pub enhance: EnhanceConfig,
    pub temperature: TemperaturePolicy,
    pub synthesizer: SynthesizerConfig,
    pub train: TrainConfig,
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

//! TOML configuration file. Every field is optional; command-line flags
//! take precedence over the file, and built-in defaults fill the rest.

use serde::Deserialize;
use std::path::{Path, PathBuf};

use gridge::mclab::EstimatorConfig;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: Option<u32>,
    pub fit: Option<FitSection>,
    pub tune: Option<TuneSection>,
    pub simulate: Option<SimulateSection>,
    pub causal: Option<CausalSection>,
    pub risk: Option<RiskSection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub data: Option<PathBuf>,
    pub family: Option<String>,
    pub lambda: Option<f64>,
    pub weighting: Option<String>,
    pub target: Option<Vec<f64>>,
    pub mask: Option<Vec<bool>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub data: Option<PathBuf>,
    pub family: Option<String>,
    pub selector: Option<String>,
    pub weighting: Option<String>,
    pub target: Option<Vec<f64>>,
    pub mask: Option<Vec<bool>>,
    pub folds: Option<usize>,
    pub grid_size: Option<usize>,
    pub r: Option<f64>,
    pub seed: Option<u64>,
    /// Explicit strength grid; overrides the constructed one.
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub base_seed: Option<u64>,
    pub grid_size: Option<usize>,
    pub r: Option<f64>,
    pub folds: Option<usize>,
    pub extreme_threshold: Option<f64>,
    pub tail_alpha: Option<f64>,
    pub tail_ranking: Option<String>,
    pub calibration_draws: Option<usize>,
    pub dgp_seed: Option<u64>,
    pub estimators: Option<Vec<EstimatorConfig>>,
    pub dgp: Option<DgpSection>,
}

/// Overrides the stock rare-category design with a custom one.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSection {
    pub covariate_sd: Vec<f64>,
    pub slopes: Vec<Vec<f64>>,
    pub target_probs: Vec<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CausalSection {
    pub data: Option<PathBuf>,
    pub groups: Option<usize>,
    pub selector: Option<String>,
    pub lambda: Option<f64>,
    pub weighting: Option<String>,
    pub grid_size: Option<usize>,
    pub r: Option<f64>,
    pub floor: Option<f64>,
    pub folds: Option<usize>,
    pub fold_seed: Option<u64>,
    pub taus: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub data: Option<PathBuf>,
    pub family: Option<String>,
    pub weighting: Option<String>,
    pub target: Option<Vec<f64>>,
    pub mask: Option<Vec<bool>>,
    pub lambdas: Option<Vec<f64>>,
    pub grid_size: Option<usize>,
    pub r: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: ConfigFile = toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("cannot parse config {}: {e}", path.display()))
        })?;
        match config.schema_version {
            Some(SCHEMA_VERSION) => Ok(config),
            Some(v) => Err(CliError::Config(format!(
                "config schema_version {v} is not supported (expected {SCHEMA_VERSION})"
            ))),
            None => Err(CliError::Config(
                "config file must declare schema_version".into(),
            )),
        }
    }
}

//! Declarative run configuration.
//!
//! One TOML file configures every subcommand; command-line flags override
//! file values, and the root `--seed` overrides the file seed. Secrets
//! never live in the file: endpoint sections name the environment variable
//! holding the API key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shockcast::dataset::BuildConfig;
use shockcast::forecast::{EndpointConfig, FeatureConfig};
use shockcast::metrics::EvalConfig;
use shockcast::synth::SynthConfig;
use shockcast::training::TrainConfig;
use shockcast::Scalar;

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub dataset: BuildConfig,
    pub evaluate: EvalConfig,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub forecast: ForecastSection,
    pub endpoint: EndpointConfig,
    pub judge_endpoint: EndpointConfig,
    pub synth: SynthConfig,
    pub prompt: PromptSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastSection {
    /// `constant`, `remote`, or `toy`.
    pub backend: String,
    pub constant_rate: Scalar,
    /// Saved policy path for the toy backend.
    pub policy: Option<PathBuf>,
    /// Spread regularizer for group advantages.
    pub group_epsilon_std: Scalar,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            backend: "constant".to_string(),
            constant_rate: 0.149,
            policy: None,
            group_epsilon_std: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSection {
    /// Optional template override; the built-in template is used otherwise.
    pub template: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))
    }

    /// Root seed: flag beats file beats zero.
    pub fn resolve_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }
}

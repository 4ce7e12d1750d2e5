// SPDX-License-Identifier: Apache-2.0
//! Service configuration. The backend secret never appears here; the
//! backend section only names the environment variable that holds it.

use std::path::{Path, PathBuf};

use edagent_core::agent::BackendConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    /// Extra planning attempts after an unparseable plan.
    pub plan_retries: u32,
    pub backend: BackendConfig,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("edagent-data"),
            plan_retries: 2,
            backend: BackendConfig::rule_based(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl HubConfig {
    pub fn from_toml_str(text: &str) -> Result<HubConfig, ConfigError> {
        let config: HubConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.backend.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<HubConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        HubConfig::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

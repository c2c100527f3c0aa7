//! Service configuration: TOML file, then `CBROWSE_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ranking::RankingConfig;
use crate::session::ExperimentArm;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid value {value:?} for {var}")]
    Env { var: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub corpus: PathBuf,
    pub thesaurus: Option<PathBuf>,
    /// Append-only transaction log; events are kept in memory only when absent.
    pub log: Option<PathBuf>,
    /// Seed of the session-to-arm hash.
    pub seed: u64,
    /// Put every new session in one arm.
    pub arm_force: Option<ExperimentArm>,
    pub ranking: RankingConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1".into(),
            port: 8080,
            corpus: PathBuf::from("corpus.jsonl"),
            thesaurus: None,
            log: None,
            seed: 0,
            arm_force: None,
            ranking: RankingConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies overrides from a variable lookup, normally [`std::env::var`].
    pub fn apply_env<F>(&mut self, get: F) -> Result<(), ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        if let Some(v) = get("CBROWSE_PORT") {
            self.port = v.parse().map_err(|_| ConfigError::Env {
                var: "CBROWSE_PORT",
                value: v,
            })?;
        }
        if let Some(v) = get("CBROWSE_SEED") {
            self.seed = v.parse().map_err(|_| ConfigError::Env {
                var: "CBROWSE_SEED",
                value: v,
            })?;
        }
        if let Some(v) = get("CBROWSE_ARM_FORCE") {
            self.arm_force = Some(v.parse().map_err(|_| ConfigError::Env {
                var: "CBROWSE_ARM_FORCE",
                value: v,
            })?);
        }
        if let Some(v) = get("CBROWSE_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("CBROWSE_CORPUS") {
            self.corpus = v.into();
        }
        if let Some(v) = get("CBROWSE_THESAURUS") {
            self.thesaurus = Some(v.into());
        }
        if let Some(v) = get("CBROWSE_LOG") {
            self.log = Some(v.into());
        }
        Ok(())
    }
}

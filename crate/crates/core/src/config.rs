//! Configuration shared by the service and the CLI: a TOML file with
//! environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::community::DEFAULT_THRESHOLD;
use crate::error::{Error, Result};
use crate::layout::LayoutParams;

pub const DEFAULT_EDGE_LIMIT: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Address the HTTP service binds to.
    pub bind: String,
    /// Directory holding one subdirectory per dataset.
    pub data_root: PathBuf,
    pub community: CommunityConfig,
    pub layout: LayoutParams,
    pub network: NetworkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    /// Overlap a new community must exceed to inherit an old label.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Maximum number of edges returned by the network endpoint.
    pub edge_limit: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            data_root: PathBuf::from("data"),
            community: CommunityConfig::default(),
            layout: LayoutParams::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            edge_limit: DEFAULT_EDGE_LIMIT,
        }
    }
}

pub fn validate_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Config(format!("community threshold must be in [0, 1], got {t}")))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` if given (defaults otherwise) and applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides: `SOCNET_BIND`, `SOCNET_DATA_ROOT`, `SOCNET_THRESHOLD`, `SOCNET_EDGE_LIMIT`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get("SOCNET_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("SOCNET_DATA_ROOT") {
            self.data_root = PathBuf::from(v);
        }
        if let Some(v) = get("SOCNET_THRESHOLD") {
            self.community.threshold = v
                .parse()
                .map_err(|_| Error::Config(format!("SOCNET_THRESHOLD: not a number: {v}")))?;
        }
        if let Some(v) = get("SOCNET_EDGE_LIMIT") {
            self.network.edge_limit = v
                .parse()
                .map_err(|_| Error::Config(format!("SOCNET_EDGE_LIMIT: not an integer: {v}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        validate_threshold(self.community.threshold)?;
        self.layout.validate().map_err(Error::Config)
    }
}

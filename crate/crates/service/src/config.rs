use std::path::{Path, PathBuf};

use alphawealth_core::qpd::DEFAULT_MAX_COST;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const ENV_LISTEN: &str = "ALPHAWEALTH_LISTEN";
pub const ENV_DATA_DIR: &str = "ALPHAWEALTH_DATA_DIR";
pub const ENV_MAX_COST: &str = "ALPHAWEALTH_MAX_COST";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Search cap applied to new instances that do not set their own.
    pub max_cost: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { listen: "127.0.0.1:8080".into(), data_dir: PathBuf::from("data"), max_cost: DEFAULT_MAX_COST }
    }
}

impl ServiceConfig {
    /// Reads the TOML file (if given), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("reading {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| ServiceError::Config(format!("parsing {}: {e}", p.display())))?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Applies overrides from `lookup`, which maps variable names to values.
    pub fn apply_env<F: Fn(&str) -> Option<String>>(&mut self, lookup: F) -> Result<()> {
        if let Some(v) = lookup(ENV_LISTEN) {
            self.listen = v;
        }
        if let Some(v) = lookup(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = lookup(ENV_MAX_COST) {
            self.max_cost = v
                .parse()
                .map_err(|_| ServiceError::Config(format!("{ENV_MAX_COST} must be a positive integer, got {v:?}")))?;
        }
        if self.max_cost == 0 {
            return Err(ServiceError::Config("max_cost must be positive".into()));
        }
        Ok(())
    }
}

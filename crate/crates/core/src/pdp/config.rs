use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::policy::EngineMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("environment override {name}: {message}")]
    Env { name: String, message: String },
}

/// Service configuration, read from TOML. Each key can be overridden by an
/// environment variable named `CALTRACE_` + the upper-cased key.
///
/// ```toml
/// listen_addr = "127.0.0.1:8181"
/// store_path = "data/events.log"
/// engine_mode = "unified"
/// timeout_ms = 1000
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen_addr")]
    pub listen_addr: String,
    pub store_path: PathBuf,
    #[serde(default = "default_mode")]
    pub engine_mode: EngineMode,
    /// Server: longest wait for the store lock before answering 503.
    /// Client: total budget for one request, including reconnects.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_listen_addr() -> String {
    "127.0.0.1:8181".into()
}

fn default_mode() -> EngineMode {
    EngineMode::Unified
}

fn default_timeout_ms() -> u64 {
    1000
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads the file, then applies `CALTRACE_*` overrides from the process
    /// environment.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)?.with_overrides(std::env::vars())
    }

    pub fn with_overrides(
        mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        for (name, value) in vars {
            let bad = |message: String| ConfigError::Env {
                name: name.clone(),
                message,
            };
            match name.as_str() {
                "CALTRACE_LISTEN_ADDR" => self.listen_addr = value,
                "CALTRACE_STORE_PATH" => self.store_path = value.into(),
                "CALTRACE_ENGINE_MODE" => self.engine_mode = value.parse().map_err(bad)?,
                "CALTRACE_TIMEOUT_MS" => {
                    self.timeout_ms = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                _ => {}
            }
        }
        Ok(self)
    }

    pub fn timeout(&self) -> std::time::Duration {
        std::time::Duration::from_millis(self.timeout_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ServiceConfig::from_toml_str(r#"store_path = "x.log""#).unwrap();
        assert_eq!(c.listen_addr, "127.0.0.1:8181");
        assert_eq!(c.engine_mode, EngineMode::Unified);
        let c = c
            .with_overrides([
                ("CALTRACE_ENGINE_MODE".to_string(), "baseline".to_string()),
                ("CALTRACE_TIMEOUT_MS".to_string(), "50".to_string()),
                ("HOME".to_string(), "/".to_string()),
            ])
            .unwrap();
        assert_eq!(c.engine_mode, EngineMode::BaselineConjunction);
        assert_eq!(c.timeout_ms, 50);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml_str("listen_addr = 3").is_err());
        assert!(ServiceConfig::from_toml_str("store_path = \"a\"\nbogus = 1").is_err());
        let c = ServiceConfig::from_toml_str(r#"store_path = "x.log""#).unwrap();
        let err = c
            .with_overrides([("CALTRACE_ENGINE_MODE".to_string(), "fast".to_string())])
            .unwrap_err();
        assert!(matches!(err, ConfigError::Env { .. }));
    }
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use adaas_core::bridge::BridgeConfig;
use adaas_core::control::{ControlConfig, Defaults};
use adaas_core::data_io::{SinkSpec, SourceSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Server configuration, read from a TOML file.
///
/// ```toml
/// listen_addr = "127.0.0.1:7070"
/// state_file = "/var/lib/adaas/state.json"
/// status_poll_interval_ms = 1000
///
/// [default_source]
/// kind = "http_poll"
/// base_url = "http://metrics:8428"
/// poll_interval_secs = 15
///
/// [default_sink]
/// kind = "json_lines_file"
/// path = "/var/log/adaas/anomalies.jsonl"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen_addr: SocketAddr,
    pub state_file: Option<PathBuf>,
    pub status_poll_interval_ms: u64,
    pub default_source: Option<SourceSpec>,
    pub default_sink: Option<SinkSpec>,
    /// Waits between source retries before a worker is marked failed.
    pub source_retry_backoff_ms: Vec<u64>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 7070)),
            state_file: None,
            status_poll_interval_ms: 1000,
            default_source: None,
            default_sink: None,
            source_retry_backoff_ms: vec![1000, 2000, 4000],
        }
    }
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.status_poll_interval_ms == 0 {
            return Err(ConfigError::Invalid(
                "status_poll_interval_ms must be positive".into(),
            ));
        }
        if let Some(s) = &self.default_source {
            s.validate()
                .map_err(|e| ConfigError::Invalid(format!("default_source: {e}")))?;
        }
        Ok(())
    }

    pub fn control(&self) -> ControlConfig {
        ControlConfig {
            state_file: self.state_file.clone(),
            defaults: Defaults {
                source: self.default_source.clone(),
                sink: self.default_sink.clone(),
            },
            status_poll_interval: Duration::from_millis(self.status_poll_interval_ms),
        }
    }

    pub fn bridge(&self) -> BridgeConfig {
        BridgeConfig {
            retry_backoff: self
                .source_retry_backoff_ms
                .iter()
                .map(|&ms| Duration::from_millis(ms))
                .collect(),
            ..BridgeConfig::default()
        }
    }
}

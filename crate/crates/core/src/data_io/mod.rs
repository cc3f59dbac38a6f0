//! Data handlers: where samples come from and where anomalies go.
//!
//! Detection logic never touches I/O directly; a worker pairs one
//! [`SourceSpec`] with one [`SinkSpec`] and moves samples and
//! [`AnomalyRecord`]s between them.

pub mod bus;
pub mod csv;
pub mod http;
pub mod sink;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bus::{Bus, BusClosed, BusMessage, Subscription};
pub use csv::{read_csv_samples, write_csv_samples, CsvSampleReader, SAMPLE_CSV_HEADER};
pub use http::HttpPollClient;
pub use sink::{open_sink, write_anomaly, AnomalySink};

pub const DEFAULT_SAMPLING_INTERVAL_SECS: f64 = 60.0;

fn default_interval() -> f64 {
    DEFAULT_SAMPLING_INTERVAL_SECS
}

/// Where a detector reads its samples from. The KPI filter is the detector's own KPI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    CsvFile {
        path: PathBuf,
    },
    HttpPoll {
        base_url: String,
        #[serde(default = "default_interval")]
        poll_interval_secs: f64,
    },
    Bus {
        topic: String,
    },
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        match self {
            SourceSpec::HttpPoll {
                base_url,
                poll_interval_secs,
            } => {
                if !(poll_interval_secs.is_finite() && *poll_interval_secs > 0.0) {
                    return Err(DataError::InvalidSpec("poll interval must be > 0".into()));
                }
                if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
                    return Err(DataError::InvalidSpec(format!("bad base url {base_url}")));
                }
                Ok(())
            }
            SourceSpec::Bus { topic } if topic.is_empty() => {
                Err(DataError::InvalidSpec("empty bus topic".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Where a detector writes the anomalies it fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SinkSpec {
    CsvFile { path: PathBuf },
    JsonLinesFile { path: PathBuf },
    Bus { topic: String },
}

/// One fired anomaly, in the format shared by every sink.
///
/// Field order is part of the wire format: `ts_ms, detector_id, kpi,
/// analysis, observed, threshold, score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    #[serde(rename = "ts_ms")]
    pub timestamp_ms: i64,
    pub detector_id: String,
    pub kpi: String,
    pub analysis: String,
    pub observed: f64,
    pub threshold: f64,
    pub score: f64,
}

impl AnomalyRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.detector_id.is_empty() {
            return Err(DataError::InvalidRecord("empty detector_id".into()));
        }
        if self.score.is_nan() || self.score < 0.0 || !self.observed.is_finite() || !self.threshold.is_finite() {
            return Err(DataError::InvalidRecord(format!(
                "non-finite or negative field in {self:?}"
            )));
        }
        Ok(())
    }

    /// Canonical JSON-lines encoding, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("anomaly records always serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, DataError> {
        serde_json::from_str(line).map_err(|e| DataError::Malformed {
            line: 0,
            reason: e.to_string(),
        })
    }
}

/// Read every record of an anomaly JSON-lines file.
pub fn read_anomalies(path: &std::path::Path) -> Result<Vec<AnomalyRecord>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DataError::Malformed {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("source not found: {0}")]
    NotFound(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: timestamp {current} not after previous {previous} for kpi {kpi}")]
    NonMonotonic {
        line: usize,
        kpi: String,
        previous: i64,
        current: i64,
    },
    #[error("network error (retryable): {0}")]
    Network(String),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

impl DataError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::NotFound(path.to_path_buf())
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, DataError::Network(_))
    }
}

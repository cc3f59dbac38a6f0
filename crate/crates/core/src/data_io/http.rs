//! Minimal HTTP time-series source.
//!
//! Wire format: `GET {base}/series?kpi=NAME&from=MS` returns a JSON array of
//! `[timestamp_ms, value]` pairs, ascending, every timestamp strictly greater
//! than `from`.

use super::DataError;
use crate::detector::Sample;

#[cfg(feature = "http")]
pub struct HttpPollClient {
    base_url: String,
    client: reqwest::blocking::Client,
}

/// Placeholder when the crate is built without the `http` feature: every
/// constructor call fails, so HTTP-sourced detectors end up failed.
#[cfg(not(feature = "http"))]
pub struct HttpPollClient {
    _private: (),
}

#[cfg(not(feature = "http"))]
impl HttpPollClient {
    pub fn new(_base_url: &str) -> Result<Self, DataError> {
        Err(DataError::InvalidSpec("built without HTTP support".into()))
    }

    pub fn poll(&self, _kpi: &str, _since: i64) -> Result<Vec<Sample>, DataError> {
        unreachable!("HttpPollClient cannot be constructed without the http feature")
    }
}

#[cfg(feature = "http")]
impl HttpPollClient {
    pub fn new(base_url: &str) -> Result<Self, DataError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(10))
            .build()
            .map_err(|e| DataError::Network(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_owned(),
            client,
        })
    }

    /// Every sample of `kpi` with timestamp strictly after `since`.
    pub fn poll(&self, kpi: &str, since: i64) -> Result<Vec<Sample>, DataError> {
        let url = format!("{}/series", self.base_url);
        let resp = self
            .client
            .get(&url)
            .query(&[("kpi", kpi.to_owned()), ("from", since.to_string())])
            .send()
            .map_err(|e| DataError::Network(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(DataError::Network(format!("{url}: HTTP {status}")));
        }
        if !status.is_success() {
            return Err(DataError::MalformedPayload(format!("{url}: HTTP {status}")));
        }
        let body = resp.text().map_err(|e| DataError::Network(e.to_string()))?;
        parse_series(kpi, since, &body)
    }
}

/// Decode and check a `/series` payload.
pub fn parse_series(kpi: &str, since: i64, body: &str) -> Result<Vec<Sample>, DataError> {
    let points: Vec<(i64, f64)> =
        serde_json::from_str(body).map_err(|e| DataError::MalformedPayload(e.to_string()))?;
    let mut last = since;
    let mut out = Vec::with_capacity(points.len());
    for (ts, value) in points {
        if ts <= last {
            return Err(DataError::MalformedPayload(format!(
                "timestamp {ts} not after {last}"
            )));
        }
        if !value.is_finite() {
            return Err(DataError::MalformedPayload(format!("non-finite value at {ts}")));
        }
        last = ts;
        out.push(Sample::new(ts, kpi, value));
    }
    Ok(out)
}

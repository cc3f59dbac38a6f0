use adaas_core::control::{ApplyReport, DesiredStateDocument, StatusEntry};
use adaas_core::registry::DetectorMetadata;
use reqwest::blocking::{RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::CliError;

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Blocking client for the control server API.
pub struct Client {
    base: String,
    http: reqwest::blocking::Client,
}

impl Client {
    pub fn new(base: &str) -> Result<Self, CliError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self {
            base: base.trim_end_matches('/').to_owned(),
            http,
        })
    }

    fn send(&self, req: RequestBuilder) -> Result<Response, CliError> {
        req.send()
            .map_err(|e| CliError::Remote(format!("cannot reach {}: {e}", self.base)))
    }

    /// Decode a body; error responses become `Remote` with the server's message verbatim.
    fn decode<T: DeserializeOwned>(resp: Response, accept: &[u16]) -> Result<T, CliError> {
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| CliError::Remote(format!("reading response: {e}")))?;
        if status.is_success() || accept.contains(&status.as_u16()) {
            return serde_json::from_str(&text)
                .map_err(|e| CliError::Remote(format!("unexpected response: {e}")));
        }
        let msg = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(CliError::Remote(format!("server returned {status}: {msg}")))
    }

    pub fn apply(&self, doc: &DesiredStateDocument) -> Result<ApplyReport, CliError> {
        let resp = self.send(self.http.post(format!("{}/desired-state", self.base)).json(doc))?;
        // 502 carries a report with per-item failures
        Self::decode(resp, &[502])
    }

    pub fn status(&self) -> Result<Vec<StatusEntry>, CliError> {
        let resp = self.send(
            self.http
                .get(format!("{}/detectors", self.base))
                .query(&[("refresh", "true")]),
        )?;
        Self::decode(resp, &[])
    }

    pub fn delete(&self, id: &str) -> Result<ApplyReport, CliError> {
        let resp = self.send(self.http.delete(format!("{}/detectors/{id}", self.base)))?;
        Self::decode(resp, &[502])
    }

    pub fn analyses(&self) -> Result<Vec<DetectorMetadata>, CliError> {
        let resp = self.send(self.http.get(format!("{}/analyses", self.base)))?;
        Self::decode(resp, &[])
    }
}

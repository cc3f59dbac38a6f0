//! Control plane: declarative requests in, reconciled deployments out.

mod server;
mod spec;

use thiserror::Error;

pub use server::{
    Action, ApplyReport, ChangeSummary, ControlConfig, ControlServer, ItemOutcome, StatusEntry,
};
pub use spec::{
    compute_changeset, detector_id, expand_request, AnalysisRequest, ChangeSet, Defaults,
    DesiredState, DesiredStateDocument, DetectionRequest, DetectorSpec,
};

use crate::registry::RegistryError;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("unknown detector {0}")]
    UnknownId(String),
    #[error("bridge unavailable: {0}")]
    BridgeUnavailable(String),
    #[error("state file {path}: {reason}")]
    Persistence { path: String, reason: String },
    #[error("control loop has shut down")]
    ShutDown,
}

impl ControlError {
    /// Errors caused by the caller's input rather than the system.
    pub fn is_client_error(&self) -> bool {
        matches!(
            self,
            ControlError::Registry(_) | ControlError::Validation(_) | ControlError::UnknownId(_)
        )
    }
}

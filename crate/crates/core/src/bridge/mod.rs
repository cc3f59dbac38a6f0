//! The bridge: turns deploy/undeploy requests into running detector workers
//! and reports their lifecycle.
//!
//! [`BridgeApi`] is the contract the control server talks to. [`LocalBridge`]
//! runs every detector as a supervised in-process worker thread;
//! [`MemoryBridge`] only keeps bookkeeping and is used for dry runs and
//! fault-injection tests of the control plane.

mod memory;
mod worker;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use memory::MemoryBridge;

use crate::control::DetectorSpec;
use crate::data_io::Bus;
use crate::registry::typed_params;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LifecycleState {
    Pending,
    Running,
    Failed { reason: String },
    Stopped,
}

impl LifecycleState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, LifecycleState::Failed { .. } | LifecycleState::Stopped)
    }

    pub fn label(&self) -> &'static str {
        match self {
            LifecycleState::Pending => "pending",
            LifecycleState::Running => "running",
            LifecycleState::Failed { .. } => "failed",
            LifecycleState::Stopped => "stopped",
        }
    }
}

/// Snapshot of one deployed detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorInstance {
    pub spec: DetectorSpec,
    #[serde(flatten)]
    pub state: LifecycleState,
    pub started_at_ms: i64,
    pub samples_processed: u64,
    pub anomalies_fired: u64,
    /// An offline source has been fully replayed.
    #[serde(default)]
    pub source_exhausted: bool,
}

impl DetectorInstance {
    fn new(spec: DetectorSpec) -> Self {
        Self {
            spec,
            state: LifecycleState::Pending,
            started_at_ms: now_ms(),
            samples_processed: 0,
            anomalies_fired: 0,
            source_exhausted: false,
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.detector_id
    }
}

pub(crate) fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BridgeError {
    #[error("detector {0} already deployed")]
    Duplicate(String),
    #[error("unknown detector {0}")]
    UnknownId(String),
    #[error("bridge unavailable: {0}")]
    Unavailable(String),
    #[error("deploy rejected: {0}")]
    Rejected(String),
}

/// CRUD and status operations offered to the control server.
pub trait BridgeApi: Send + Sync {
    fn deploy(&self, spec: DetectorSpec) -> Result<String, BridgeError>;
    fn undeploy(&self, id: &str) -> Result<DetectorInstance, BridgeError>;
    fn list_instances(&self) -> Result<Vec<DetectorInstance>, BridgeError>;
    fn status(&self, id: &str) -> Result<DetectorInstance, BridgeError>;
}

impl<T: BridgeApi + ?Sized> BridgeApi for Arc<T> {
    fn deploy(&self, spec: DetectorSpec) -> Result<String, BridgeError> {
        (**self).deploy(spec)
    }
    fn undeploy(&self, id: &str) -> Result<DetectorInstance, BridgeError> {
        (**self).undeploy(id)
    }
    fn list_instances(&self) -> Result<Vec<DetectorInstance>, BridgeError> {
        (**self).list_instances()
    }
    fn status(&self, id: &str) -> Result<DetectorInstance, BridgeError> {
        (**self).status(id)
    }
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Waits between consecutive source retries; the worker fails once exhausted.
    pub retry_backoff: Vec<Duration>,
    /// How long an idle worker sleeps before checking its source again.
    pub idle_wait: Duration,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            retry_backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
            idle_wait: Duration::from_millis(50),
        }
    }
}

/// Bridge backed by one supervised thread per detector.
pub struct LocalBridge {
    bus: Arc<Bus>,
    config: BridgeConfig,
    workers: Mutex<BTreeMap<String, worker::WorkerHandle>>,
}

impl LocalBridge {
    pub fn new(bus: Arc<Bus>, config: BridgeConfig) -> Self {
        Self {
            bus,
            config,
            workers: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn bus(&self) -> &Arc<Bus> {
        &self.bus
    }

    /// Make the worker of `id` panic at its next step. Used by robustness tests.
    #[doc(hidden)]
    pub fn inject_crash(&self, id: &str) -> Result<(), BridgeError> {
        let workers = self.workers.lock();
        let w = workers
            .get(id)
            .ok_or_else(|| BridgeError::UnknownId(id.to_owned()))?;
        w.crash();
        Ok(())
    }

    /// Block until `pred` holds for `id` or `timeout` elapses; returns the last snapshot.
    pub fn wait_for(
        &self,
        id: &str,
        timeout: Duration,
        pred: impl Fn(&DetectorInstance) -> bool,
    ) -> Result<DetectorInstance, BridgeError> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let snap = self.status(id)?;
            if pred(&snap) || std::time::Instant::now() >= deadline {
                return Ok(snap);
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}

impl BridgeApi for LocalBridge {
    fn deploy(&self, spec: DetectorSpec) -> Result<String, BridgeError> {
        let params = typed_params(&spec.analysis_name, &spec.params)
            .map_err(|e| BridgeError::Rejected(e.to_string()))?;
        let mut workers = self.workers.lock();
        if workers.contains_key(&spec.detector_id) {
            return Err(BridgeError::Duplicate(spec.detector_id));
        }
        let id = spec.detector_id.clone();
        let handle = worker::WorkerHandle::spawn(
            DetectorInstance::new(spec),
            params,
            self.bus.clone(),
            self.config.clone(),
        );
        workers.insert(id.clone(), handle);
        Ok(id)
    }

    fn undeploy(&self, id: &str) -> Result<DetectorInstance, BridgeError> {
        let handle = self
            .workers
            .lock()
            .remove(id)
            .ok_or_else(|| BridgeError::UnknownId(id.to_owned()))?;
        Ok(handle.stop())
    }

    fn list_instances(&self) -> Result<Vec<DetectorInstance>, BridgeError> {
        Ok(self.workers.lock().values().map(|w| w.snapshot()).collect())
    }

    fn status(&self, id: &str) -> Result<DetectorInstance, BridgeError> {
        self.workers
            .lock()
            .get(id)
            .map(|w| w.snapshot())
            .ok_or_else(|| BridgeError::UnknownId(id.to_owned()))
    }
}

impl Drop for LocalBridge {
    fn drop(&mut self) {
        let workers = std::mem::take(&mut *self.workers.lock());
        for (_, w) in workers {
            w.stop();
        }
    }
}

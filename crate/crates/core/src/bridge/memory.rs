use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BridgeApi, BridgeError, DetectorInstance, LifecycleState};
use crate::control::DetectorSpec;

/// Bookkeeping-only bridge: deployed detectors go straight to `Running` and
/// never process data. Supports fault injection for control-plane tests.
pub struct MemoryBridge {
    instances: Mutex<BTreeMap<String, DetectorInstance>>,
    rejected: Mutex<BTreeSet<String>>,
    flaky: Mutex<Option<(f64, ChaCha8Rng)>>,
    deploys: AtomicU64,
    undeploys: AtomicU64,
    queries: AtomicU64,
}

/// Counts of calls that reached the bridge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallCounts {
    pub deploys: u64,
    pub undeploys: u64,
    pub queries: u64,
}

impl CallCounts {
    pub fn mutations(&self) -> u64 {
        self.deploys + self.undeploys
    }
}

impl Default for MemoryBridge {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryBridge {
    pub fn new() -> Self {
        Self {
            instances: Mutex::new(BTreeMap::new()),
            rejected: Mutex::new(BTreeSet::new()),
            flaky: Mutex::new(None),
            deploys: AtomicU64::new(0),
            undeploys: AtomicU64::new(0),
            queries: AtomicU64::new(0),
        }
    }

    /// Every call fails as unavailable with probability `p`, drawn from a seeded stream.
    pub fn with_failure_rate(self, p: f64, seed: u64) -> Self {
        *self.flaky.lock() = Some((p, ChaCha8Rng::seed_from_u64(seed)));
        self
    }

    /// Deploys of `id` are rejected until further notice.
    pub fn reject(&self, id: &str) {
        self.rejected.lock().insert(id.to_owned());
    }

    /// Force the lifecycle state of a deployed instance.
    pub fn set_state(&self, id: &str, state: LifecycleState) -> Result<(), BridgeError> {
        let mut inst = self.instances.lock();
        let i = inst
            .get_mut(id)
            .ok_or_else(|| BridgeError::UnknownId(id.to_owned()))?;
        i.state = state;
        Ok(())
    }

    pub fn counts(&self) -> CallCounts {
        CallCounts {
            deploys: self.deploys.load(Ordering::SeqCst),
            undeploys: self.undeploys.load(Ordering::SeqCst),
            queries: self.queries.load(Ordering::SeqCst),
        }
    }

    fn maybe_fail(&self) -> Result<(), BridgeError> {
        if let Some((p, rng)) = self.flaky.lock().as_mut() {
            if rng.random::<f64>() < *p {
                return Err(BridgeError::Unavailable("injected fault".into()));
            }
        }
        Ok(())
    }
}

impl BridgeApi for MemoryBridge {
    fn deploy(&self, spec: DetectorSpec) -> Result<String, BridgeError> {
        self.deploys.fetch_add(1, Ordering::SeqCst);
        self.maybe_fail()?;
        if self.rejected.lock().contains(&spec.detector_id) {
            return Err(BridgeError::Rejected(format!(
                "backend refused {}",
                spec.detector_id
            )));
        }
        let mut inst = self.instances.lock();
        if inst.contains_key(&spec.detector_id) {
            return Err(BridgeError::Duplicate(spec.detector_id));
        }
        let id = spec.detector_id.clone();
        let mut i = DetectorInstance::new(spec);
        i.state = LifecycleState::Running;
        inst.insert(id.clone(), i);
        Ok(id)
    }

    fn undeploy(&self, id: &str) -> Result<DetectorInstance, BridgeError> {
        self.undeploys.fetch_add(1, Ordering::SeqCst);
        self.maybe_fail()?;
        let mut i = self
            .instances
            .lock()
            .remove(id)
            .ok_or_else(|| BridgeError::UnknownId(id.to_owned()))?;
        i.state = LifecycleState::Stopped;
        Ok(i)
    }

    fn list_instances(&self) -> Result<Vec<DetectorInstance>, BridgeError> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        self.maybe_fail()?;
        Ok(self.instances.lock().values().cloned().collect())
    }

    fn status(&self, id: &str) -> Result<DetectorInstance, BridgeError> {
        self.queries.fetch_add(1, Ordering::SeqCst);
        self.instances
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| BridgeError::UnknownId(id.to_owned()))
    }
}

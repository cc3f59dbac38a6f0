//! The reconciliation loop.
//!
//! One thread owns the desired state. API calls are turned into commands and
//! queued; the loop handles them strictly one at a time. Between commands it
//! refreshes a status snapshot every poll interval, which readers clone
//! without waiting on reconciliation.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::spec::{compute_changeset, expand_request, DesiredStateDocument};
use super::{ControlError, Defaults, DesiredState, DetectionRequest, DetectorSpec};
use crate::bridge::{BridgeApi, BridgeError, DetectorInstance, LifecycleState};
use crate::registry::{DetectorMetadata, Registry};

#[derive(Debug, Clone)]
pub struct ControlConfig {
    /// Desired state is persisted here and reloaded at startup.
    pub state_file: Option<PathBuf>,
    pub defaults: Defaults,
    pub status_poll_interval: Duration,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            state_file: None,
            defaults: Defaults::default(),
            status_poll_interval: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Deploy,
    Undeploy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub detector_id: String,
    pub action: Action,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub to_deploy: Vec<String>,
    pub to_undeploy: Vec<String>,
}

/// What one reconciliation did.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApplyReport {
    pub changeset: ChangeSummary,
    pub outcomes: Vec<ItemOutcome>,
}

impl ApplyReport {
    pub fn is_success(&self) -> bool {
        self.outcomes.iter().all(|o| o.ok)
    }

    pub fn is_noop(&self) -> bool {
        self.changeset.to_deploy.is_empty() && self.changeset.to_undeploy.is_empty()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ItemOutcome> {
        self.outcomes.iter().filter(|o| !o.ok)
    }
}

/// One row of the deployment status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEntry {
    pub spec: DetectorSpec,
    #[serde(flatten)]
    pub state: LifecycleState,
    /// Part of the current desired state.
    pub desired: bool,
    pub samples_processed: u64,
    pub anomalies_fired: u64,
}

impl StatusEntry {
    pub fn id(&self) -> &str {
        &self.spec.detector_id
    }
}

type Reply<T> = Sender<Result<T, ControlError>>;

enum Command {
    Apply(DesiredState, Reply<ApplyReport>),
    Add(Vec<DetectorSpec>, Reply<ApplyReport>),
    Delete(String, Reply<ApplyReport>),
    Reconcile(Reply<ApplyReport>),
    Refresh(Sender<()>),
    Shutdown,
}

/// Handle to the control server. Cheap operations (status, registry) are
/// served directly; mutations go through the reconciliation queue.
pub struct ControlServer {
    registry: Arc<Registry>,
    defaults: Defaults,
    commands: Sender<Command>,
    status: Arc<RwLock<Vec<StatusEntry>>>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl ControlServer {
    /// Load persisted desired state (if any), start the loop and reconcile once.
    pub fn start(
        config: ControlConfig,
        registry: Arc<Registry>,
        bridge: Arc<dyn BridgeApi>,
    ) -> Result<Self, ControlError> {
        let desired = match &config.state_file {
            Some(path) if path.exists() => load_state(path)?,
            _ => DesiredState::new(),
        };
        let status = Arc::new(RwLock::new(Vec::new()));
        let (tx, rx) = unbounded();
        let mut reconciler = Reconciler {
            bridge,
            desired,
            last_errors: BTreeMap::new(),
            state_file: config.state_file.clone(),
            status: status.clone(),
        };
        let poll = config.status_poll_interval;
        let thread = std::thread::Builder::new()
            .name("reconciler".into())
            .spawn(move || {
                if !reconciler.desired.is_empty() {
                    match reconciler.reconcile() {
                        Ok(r) => info!(
                            deployed = r.changeset.to_deploy.len(),
                            undeployed = r.changeset.to_undeploy.len(),
                            "boot reconciliation"
                        ),
                        Err(e) => warn!(error = %e, "boot reconciliation failed"),
                    }
                } else {
                    reconciler.refresh_status();
                }
                reconciler.run(rx, poll)
            })
            .expect("spawning reconciler");
        Ok(Self {
            registry,
            defaults: config.defaults,
            commands: tx,
            status,
            thread: Mutex::new(Some(thread)),
        })
    }

    fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ControlError> {
        let (tx, rx) = bounded(1);
        self.commands
            .send(make(tx))
            .map_err(|_| ControlError::ShutDown)?;
        rx.recv().map_err(|_| ControlError::ShutDown)?
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn analyses(&self) -> Vec<DetectorMetadata> {
        self.registry.list().into_iter().cloned().collect()
    }

    /// Replace the whole desired state and reconcile.
    pub fn apply_desired_state(&self, desired: DesiredState) -> Result<ApplyReport, ControlError> {
        self.call(|r| Command::Apply(desired, r))
    }

    pub fn apply_document(&self, doc: &DesiredStateDocument) -> Result<ApplyReport, ControlError> {
        let desired = DesiredState::from_document(&self.registry, doc, &self.defaults)?;
        self.apply_desired_state(desired)
    }

    /// Add the detectors of one request to the desired state; returns their ids.
    pub fn add_request(
        &self,
        req: &DetectionRequest,
    ) -> Result<(Vec<String>, ApplyReport), ControlError> {
        let specs = expand_request(&self.registry, req, &self.defaults)?;
        let ids = specs.iter().map(|s| s.detector_id.clone()).collect();
        let report = self.call(|r| Command::Add(specs, r))?;
        Ok((ids, report))
    }

    /// Remove one detector from the desired state and reconcile.
    pub fn delete_detector(&self, id: &str) -> Result<ApplyReport, ControlError> {
        self.call(|r| Command::Delete(id.to_owned(), r))
    }

    /// Re-run reconciliation against the current desired state.
    pub fn reconcile(&self) -> Result<ApplyReport, ControlError> {
        self.call(Command::Reconcile)
    }

    /// Last status snapshot; refreshed after every command and every poll interval.
    pub fn get_deployment_status(&self) -> Vec<StatusEntry> {
        self.status.read().clone()
    }

    /// Force a status refresh and return the new snapshot.
    pub fn refresh_status(&self) -> Result<Vec<StatusEntry>, ControlError> {
        let (tx, rx) = bounded(1);
        self.commands
            .send(Command::Refresh(tx))
            .map_err(|_| ControlError::ShutDown)?;
        rx.recv().map_err(|_| ControlError::ShutDown)?;
        Ok(self.get_deployment_status())
    }

    pub fn shutdown(&self) {
        let _ = self.commands.send(Command::Shutdown);
        if let Some(t) = self.thread.lock().take() {
            let _ = t.join();
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn load_state(path: &std::path::Path) -> Result<DesiredState, ControlError> {
    let persistence = |reason: String| ControlError::Persistence {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| persistence(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| persistence(e.to_string()))
}

struct Reconciler {
    bridge: Arc<dyn BridgeApi>,
    desired: DesiredState,
    /// Most recent deploy error per desired detector that is not deployed.
    last_errors: BTreeMap<String, String>,
    state_file: Option<PathBuf>,
    status: Arc<RwLock<Vec<StatusEntry>>>,
}

impl Reconciler {
    fn run(mut self, rx: Receiver<Command>, poll: Duration) {
        loop {
            let cmd = match rx.recv_timeout(poll) {
                Ok(c) => c,
                Err(RecvTimeoutError::Timeout) => {
                    self.refresh_status();
                    continue;
                }
                Err(RecvTimeoutError::Disconnected) => return,
            };
            match cmd {
                Command::Apply(desired, reply) => {
                    self.desired = desired;
                    let _ = reply.send(self.persist_and_reconcile());
                }
                Command::Add(specs, reply) => {
                    let mut next = self.desired.clone();
                    let res = specs
                        .into_iter()
                        .try_for_each(|s| next.insert(s).map(|_| ()));
                    let out = res.and_then(|_| {
                        self.desired = next;
                        self.persist_and_reconcile()
                    });
                    let _ = reply.send(out);
                }
                Command::Delete(id, reply) => {
                    let out = if self.desired.remove(&id).is_some() {
                        self.persist_and_reconcile()
                    } else {
                        Err(ControlError::UnknownId(id))
                    };
                    let _ = reply.send(out);
                }
                Command::Reconcile(reply) => {
                    let _ = reply.send(self.reconcile());
                }
                Command::Refresh(reply) => {
                    self.refresh_status();
                    let _ = reply.send(());
                }
                Command::Shutdown => return,
            }
        }
    }

    fn persist_and_reconcile(&mut self) -> Result<ApplyReport, ControlError> {
        self.persist()?;
        self.reconcile()
    }

    fn persist(&self) -> Result<(), ControlError> {
        let Some(path) = &self.state_file else {
            return Ok(());
        };
        let persistence = |reason: String| ControlError::Persistence {
            path: path.display().to_string(),
            reason,
        };
        let body = serde_json::to_vec_pretty(&self.desired).map_err(|e| persistence(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, body).map_err(|e| persistence(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| persistence(e.to_string()))
    }

    fn reconcile(&mut self) -> Result<ApplyReport, ControlError> {
        let actual = self
            .bridge
            .list_instances()
            .map_err(|e| ControlError::BridgeUnavailable(e.to_string()))?;
        let changes = compute_changeset(&self.desired, actual.iter().map(|i| &i.spec));
        let mut report = ApplyReport {
            changeset: super::ChangeSummary {
                to_deploy: changes
                    .to_deploy
                    .iter()
                    .map(|s| s.detector_id.clone())
                    .collect(),
                to_undeploy: changes.to_undeploy.clone(),
            },
            outcomes: Vec::new(),
        };
        for id in &changes.to_undeploy {
            let res = match self.bridge.undeploy(id) {
                Ok(_) | Err(BridgeError::UnknownId(_)) => Ok(()),
                Err(e) => Err(e.to_string()),
            };
            report.outcomes.push(outcome(id, Action::Undeploy, res));
        }
        for spec in changes.to_deploy {
            let id = spec.detector_id.clone();
            let res = match self.bridge.deploy(spec) {
                Ok(_) | Err(BridgeError::Duplicate(_)) => {
                    self.last_errors.remove(&id);
                    Ok(())
                }
                Err(e) => {
                    self.last_errors.insert(id.clone(), e.to_string());
                    Err(e.to_string())
                }
            };
            report.outcomes.push(outcome(&id, Action::Deploy, res));
        }
        let desired = &self.desired;
        self.last_errors.retain(|id, _| desired.contains(id));
        self.refresh_status();
        Ok(report)
    }

    fn refresh_status(&mut self) {
        let instances = match self.bridge.list_instances() {
            Ok(i) => i,
            Err(e) => {
                warn!(error = %e, "status refresh failed; keeping previous snapshot");
                return;
            }
        };
        let mut by_id: BTreeMap<String, DetectorInstance> = instances
            .into_iter()
            .map(|i| (i.spec.detector_id.clone(), i))
            .collect();
        let mut rows = Vec::with_capacity(self.desired.len() + by_id.len());
        for spec in self.desired.specs() {
            let row = match by_id.remove(&spec.detector_id) {
                Some(inst) => StatusEntry {
                    spec: inst.spec,
                    state: inst.state,
                    desired: true,
                    samples_processed: inst.samples_processed,
                    anomalies_fired: inst.anomalies_fired,
                },
                None => StatusEntry {
                    spec: spec.clone(),
                    state: match self.last_errors.get(&spec.detector_id) {
                        Some(reason) => LifecycleState::Failed {
                            reason: reason.clone(),
                        },
                        None => LifecycleState::Pending,
                    },
                    desired: true,
                    samples_processed: 0,
                    anomalies_fired: 0,
                },
            };
            rows.push(row);
        }
        rows.extend(by_id.into_values().map(|inst| StatusEntry {
            spec: inst.spec,
            state: inst.state,
            desired: false,
            samples_processed: inst.samples_processed,
            anomalies_fired: inst.anomalies_fired,
        }));
        *self.status.write() = rows;
    }
}

fn outcome(id: &str, action: Action, res: Result<(), String>) -> ItemOutcome {
    ItemOutcome {
        detector_id: id.to_owned(),
        action,
        ok: res.is_ok(),
        error: res.err(),
    }
}

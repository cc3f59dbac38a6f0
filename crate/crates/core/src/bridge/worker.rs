use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;
use tracing::{debug, warn};

use super::{BridgeConfig, DetectorInstance, LifecycleState};
use crate::data_io::{
    open_sink, write_anomaly, AnomalyRecord, AnomalySink, Bus, CsvSampleReader, DataError,
    HttpPollClient, SourceSpec, Subscription,
};
use crate::detector::{AnalysisParams, Detector, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Control {
    Stop,
    Crash,
}

pub(super) struct WorkerHandle {
    shared: Arc<Mutex<DetectorInstance>>,
    control: Sender<Control>,
    thread: Option<JoinHandle<()>>,
}

impl WorkerHandle {
    pub(super) fn spawn(
        instance: DetectorInstance,
        params: AnalysisParams,
        bus: Arc<Bus>,
        config: BridgeConfig,
    ) -> Self {
        let shared = Arc::new(Mutex::new(instance));
        let (tx, rx) = unbounded();
        let ctx = WorkerContext {
            shared: shared.clone(),
            control: rx,
            params,
            bus,
            config,
        };
        let name = format!("detector-{}", shared.lock().spec.detector_id);
        let thread = std::thread::Builder::new()
            .name(name)
            .spawn(move || supervise(ctx))
            .expect("spawning worker thread");
        Self {
            shared,
            control: tx,
            thread: Some(thread),
        }
    }

    pub(super) fn snapshot(&self) -> DetectorInstance {
        self.shared.lock().clone()
    }

    pub(super) fn crash(&self) {
        let _ = self.control.send(Control::Crash);
    }

    /// Stop gracefully and wait for the worker to finish its current sample.
    pub(super) fn stop(mut self) -> DetectorInstance {
        let _ = self.control.send(Control::Stop);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        let mut inst = self.shared.lock();
        if !matches!(inst.state, LifecycleState::Failed { .. }) {
            inst.state = LifecycleState::Stopped;
        }
        inst.clone()
    }
}

pub(super) struct WorkerContext {
    shared: Arc<Mutex<DetectorInstance>>,
    control: Receiver<Control>,
    params: AnalysisParams,
    bus: Arc<Bus>,
    config: BridgeConfig,
}

fn supervise(ctx: WorkerContext) {
    let shared = ctx.shared.clone();
    let outcome = catch_unwind(AssertUnwindSafe(|| run_detector_loop(&ctx)));
    let final_state = match outcome {
        Ok(Ok(())) => LifecycleState::Stopped,
        Ok(Err(reason)) => LifecycleState::Failed { reason },
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            LifecycleState::Failed {
                reason: format!("worker panicked: {msg}"),
            }
        }
    };
    let mut inst = shared.lock();
    if let LifecycleState::Failed { reason } = &final_state {
        warn!(detector = %inst.spec.detector_id, %reason, "detector failed");
    }
    inst.state = final_state;
}

enum Pull {
    Samples(Vec<Sample>),
    Idle,
    Exhausted,
}

enum Source {
    Csv(CsvSampleReader),
    Http {
        client: HttpPollClient,
        kpi: String,
        since: i64,
        interval: Duration,
    },
    Bus(Subscription),
}

const CSV_BATCH: usize = 256;

impl Source {
    fn attach(spec: &SourceSpec, kpi: &str, bus: &Bus) -> Result<Self, DataError> {
        Ok(match spec {
            SourceSpec::CsvFile { path } => Source::Csv(CsvSampleReader::open(path, Some(kpi))?),
            SourceSpec::HttpPoll {
                base_url,
                poll_interval_secs,
            } => Source::Http {
                client: HttpPollClient::new(base_url)?,
                kpi: kpi.to_owned(),
                since: i64::MIN,
                interval: Duration::from_secs_f64(*poll_interval_secs),
            },
            SourceSpec::Bus { topic } => Source::Bus(bus.subscribe(topic)),
        })
    }

    fn pull(&mut self, kpi: &str, idle_wait: Duration) -> Result<Pull, DataError> {
        match self {
            Source::Csv(reader) => {
                let batch: Vec<Sample> = reader
                    .by_ref()
                    .take(CSV_BATCH)
                    .collect::<Result<_, _>>()?;
                Ok(if batch.is_empty() {
                    Pull::Exhausted
                } else {
                    Pull::Samples(batch)
                })
            }
            Source::Http {
                client, kpi, since, ..
            } => {
                let batch = client.poll(kpi, *since)?;
                if let Some(last) = batch.last() {
                    *since = last.timestamp_ms;
                    Ok(Pull::Samples(batch))
                } else {
                    Ok(Pull::Idle)
                }
            }
            Source::Bus(sub) => {
                let Ok(first) = sub.recv_timeout(idle_wait) else {
                    return Ok(Pull::Exhausted);
                };
                let Some(first) = first else {
                    return Ok(Pull::Idle);
                };
                let batch: Vec<Sample> = std::iter::once(first)
                    .chain(sub.drain())
                    .map(|m| m.into_sample())
                    .filter(|s| s.kpi == kpi)
                    .collect();
                Ok(if batch.is_empty() {
                    Pull::Idle
                } else {
                    Pull::Samples(batch)
                })
            }
        }
    }

    /// Pause between pulls that returned data.
    fn pacing(&self) -> Option<Duration> {
        match self {
            Source::Http { interval, .. } => Some(*interval),
            _ => None,
        }
    }
}

enum Wake {
    Timeout,
    Stop,
}

impl WorkerContext {
    fn wait(&self, d: Duration) -> Wake {
        match self.control.recv_timeout(d) {
            Ok(Control::Stop) | Err(RecvTimeoutError::Disconnected) => Wake::Stop,
            Ok(Control::Crash) => panic!("injected crash"),
            Err(RecvTimeoutError::Timeout) => Wake::Timeout,
        }
    }

    fn poll_control(&self) -> Option<Control> {
        match self.control.try_recv() {
            Ok(Control::Crash) => panic!("injected crash"),
            Ok(c) => Some(c),
            Err(crossbeam_channel::TryRecvError::Empty) => None,
            Err(crossbeam_channel::TryRecvError::Disconnected) => Some(Control::Stop),
        }
    }
}

struct Runner {
    detector: Detector,
    sink: Box<dyn AnomalySink>,
    detector_id: String,
    kpi: String,
    analysis: String,
    last_ts: Option<i64>,
}

impl Runner {
    fn process(&mut self, s: &Sample) -> Result<bool, DataError> {
        if self.last_ts.is_some_and(|last| s.timestamp_ms <= last) {
            debug!(detector = %self.detector_id, ts = s.timestamp_ms, "dropping out-of-order sample");
            return Ok(false);
        }
        let verdict = match self.detector.step(s) {
            Ok(v) => v,
            Err(e) => {
                warn!(detector = %self.detector_id, error = %e, "rejected sample");
                return Ok(false);
            }
        };
        self.last_ts = Some(s.timestamp_ms);
        if verdict.fired {
            let rec = AnomalyRecord {
                timestamp_ms: s.timestamp_ms,
                detector_id: self.detector_id.clone(),
                kpi: self.kpi.clone(),
                analysis: self.analysis.clone(),
                observed: verdict.observed,
                threshold: verdict.threshold_used,
                score: verdict.score,
            };
            write_anomaly(self.sink.as_mut(), &rec)?;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Pull samples from the source, run the detector, push anomalies to the sink,
/// until asked to stop. Returns `Err(reason)` when the detector must be marked failed.
pub(super) fn run_detector_loop(ctx: &WorkerContext) -> Result<(), String> {
    let spec = ctx.shared.lock().spec.clone();
    let mut source = Source::attach(&spec.source, &spec.kpi, &ctx.bus).map_err(|e| match e {
        DataError::NotFound(p) => format!("source not found: {}", p.display()),
        other => format!("source attach failed: {other}"),
    })?;
    let sink = open_sink(&spec.sink, &ctx.bus).map_err(|e| format!("sink open failed: {e}"))?;
    let mut runner = Runner {
        detector: Detector::new(ctx.params).map_err(|e| e.to_string())?,
        sink,
        detector_id: spec.detector_id.clone(),
        kpi: spec.kpi.clone(),
        analysis: spec.analysis_name.clone(),
        last_ts: None,
    };
    {
        let mut inst = ctx.shared.lock();
        inst.state = LifecycleState::Running;
    }

    let mut failures = 0usize;
    loop {
        if let Some(Control::Stop) = ctx.poll_control() {
            break;
        }
        match source.pull(&spec.kpi, ctx.config.idle_wait) {
            Ok(Pull::Samples(batch)) => {
                failures = 0;
                let mut stop = false;
                for s in &batch {
                    if let Some(Control::Stop) = ctx.poll_control() {
                        stop = true;
                        break;
                    }
                    let fired = runner
                        .process(s)
                        .map_err(|e| format!("sink write failed: {e}"))?;
                    let mut inst = ctx.shared.lock();
                    inst.samples_processed += 1;
                    if fired {
                        inst.anomalies_fired += 1;
                    }
                }
                if stop {
                    break;
                }
                if let Some(d) = source.pacing() {
                    if let Wake::Stop = ctx.wait(d) {
                        break;
                    }
                }
            }
            Ok(Pull::Idle) => {
                let d = source.pacing().unwrap_or(ctx.config.idle_wait);
                if let Wake::Stop = ctx.wait(d) {
                    break;
                }
            }
            Ok(Pull::Exhausted) => {
                ctx.shared.lock().source_exhausted = true;
                if let Wake::Stop = ctx.wait(ctx.config.idle_wait) {
                    break;
                }
            }
            Err(e) if e.is_retryable() && failures < ctx.config.retry_backoff.len() => {
                let d = ctx.config.retry_backoff[failures];
                failures += 1;
                warn!(detector = %spec.detector_id, error = %e, attempt = failures, "source error, retrying");
                if let Wake::Stop = ctx.wait(d) {
                    break;
                }
            }
            Err(e) => return Err(format!("source error: {e}")),
        }
    }
    runner
        .sink
        .flush()
        .map_err(|e| format!("sink flush failed: {e}"))
}

//! Synthetic KPI generator with a calendar-shaped workload and injectable faults.
//!
//! Every KPI is `base + coupling × rate + fault effect + noise`, sampled once a
//! minute. The call rate follows a weekday/weekend factor and an hourly curve
//! that peaks in the early afternoon. Faults are sequences of discrete
//! activations; each activation moves the affected KPIs by a fixed step, and
//! the run ends at the first sample where the fault's failure condition holds.

mod fault;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fault::{activation_times, ActivationPattern, FailureCondition, FaultSpec, FaultType};

use crate::data_io::{write_csv_samples, DataError};
use crate::detector::Sample;
use crate::prediction::{GroundTruth, LabeledRun};

/// 2024-01-01T00:00:00Z, a Monday.
pub const SIM_START_MS: i64 = 1_704_067_200_000;
pub const MINUTE_MS: i64 = 60_000;
pub const DAY_MS: i64 = 24 * 60 * MINUTE_MS;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("fault start {start_ms} is outside the run [{run_start_ms}, {run_end_ms})")]
    FaultOutsideRun {
        start_ms: i64,
        run_start_ms: i64,
        run_end_ms: i64,
    },
    #[error("run already carries a fault")]
    AlreadyFaulty,
    #[error("unknown KPI {0:?}")]
    UnknownKpi(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiModel {
    pub name: String,
    pub base: f64,
    /// Added per call/minute of workload.
    pub coupling: f64,
    pub noise_std: f64,
}

impl KpiModel {
    fn new(name: &str, base: f64, coupling: f64, noise_std: f64) -> Self {
        Self {
            name: name.to_owned(),
            base,
            coupling,
            noise_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadProfile {
    /// Calls per minute at the weekday peak.
    pub base_rate: f64,
    pub weekday_factor: f64,
    pub weekend_factor: f64,
    /// Relative load per hour of day; entry `h` is the level at `h:30`.
    pub hourly: [f64; 24],
    pub kpis: Vec<KpiModel>,
    pub seed: u64,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        Self {
            base_rate: 1000.0,
            weekday_factor: 1.0,
            weekend_factor: 0.35,
            hourly: [
                0.10, 0.08, 0.07, 0.07, 0.08, 0.12, 0.20, 0.35, 0.55, 0.72, 0.82, 0.88, 0.90,
                0.95, 1.00, 0.96, 0.88, 0.75, 0.55, 0.40, 0.30, 0.22, 0.16, 0.12,
            ],
            kpis: default_kpis(),
            seed: 42,
        }
    }
}

/// Twenty KPIs loosely modelled on a SIP service: traffic, errors, latency,
/// per-component CPU and memory, network and housekeeping.
pub fn default_kpis() -> Vec<KpiModel> {
    vec![
        KpiModel::new("calls_per_min", 0.0, 1.0, 20.0),
        KpiModel::new("successful_calls", 0.0, 0.999, 20.0),
        KpiModel::new("rejected_requests", 0.0, 0.001, 0.5),
        KpiModel::new("error_rate_pct", 0.1, 0.0, 0.05),
        KpiModel::new("latency_ms", 30.0, 0.02, 1.5),
        KpiModel::new("latency_p99_ms", 80.0, 0.06, 5.0),
        KpiModel::new("cpu_sprout_pct", 8.0, 0.04, 1.5),
        KpiModel::new("cpu_bono_pct", 6.0, 0.03, 1.2),
        KpiModel::new("cpu_homestead_pct", 5.0, 0.02, 1.0),
        KpiModel::new("memory_bono_mb", 1500.0, 0.0, 8.0),
        KpiModel::new("memory_sprout_mb", 1800.0, 0.25, 10.0),
        KpiModel::new("memory_homestead_mb", 1200.0, 0.1, 6.0),
        KpiModel::new("gc_pause_ms", 4.0, 0.002, 0.5),
        KpiModel::new("net_rx_kbps", 50.0, 1.2, 30.0),
        KpiModel::new("net_tx_kbps", 50.0, 1.1, 30.0),
        KpiModel::new("tcp_retransmits", 1.0, 0.002, 0.8),
        KpiModel::new("active_sessions", 20.0, 2.0, 40.0),
        KpiModel::new("registrations_per_min", 5.0, 0.1, 4.0),
        KpiModel::new("disk_io_kbps", 200.0, 0.3, 25.0),
        KpiModel::new("queue_depth", 0.5, 0.004, 0.4),
    ]
}

impl WorkloadProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidProfile(m));
        if !(self.weekday_factor > 0.0 && self.weekend_factor > 0.0) {
            return bad("day factors must be positive".into());
        }
        if self.base_rate.is_nan() || self.base_rate < 0.0 {
            return bad("base rate must be nonnegative".into());
        }
        if self.hourly.iter().any(|h| h.is_nan() || *h < 0.0) {
            return bad("hourly factors must be nonnegative".into());
        }
        if self.kpis.is_empty() {
            return bad("at least one KPI is required".into());
        }
        for k in &self.kpis {
            if k.noise_std.is_nan() || k.noise_std < 0.0 || !k.base.is_finite() || !k.coupling.is_finite() {
                return bad(format!("KPI {} has invalid constants", k.name));
            }
        }
        Ok(())
    }

    pub fn kpi_names(&self) -> Vec<String> {
        self.kpis.iter().map(|k| k.name.clone()).collect()
    }

    pub fn kpi_index(&self, name: &str) -> Option<usize> {
        self.kpis.iter().position(|k| k.name == name)
    }

    /// 1.0 on Monday–Friday scaled by `weekday_factor`, otherwise `weekend_factor`.
    pub fn day_factor(&self, ts_ms: i64) -> f64 {
        if weekday(ts_ms) < 5 {
            self.weekday_factor
        } else {
            self.weekend_factor
        }
    }

    /// Hourly curve linearly interpolated between half-hour anchors, wrapping at midnight.
    pub fn hour_factor(&self, ts_ms: i64) -> f64 {
        let minute_of_day = ts_ms.rem_euclid(DAY_MS) as f64 / MINUTE_MS as f64;
        let pos = (minute_of_day - 30.0).rem_euclid(1440.0) / 60.0;
        let lo = pos.floor() as usize % 24;
        let hi = (lo + 1) % 24;
        let frac = pos - pos.floor();
        self.hourly[lo] + frac * (self.hourly[hi] - self.hourly[lo])
    }

    /// Noise-free call rate.
    pub fn rate(&self, ts_ms: i64) -> f64 {
        self.base_rate * self.day_factor(ts_ms) * self.hour_factor(ts_ms)
    }
}

/// Day of week with Monday = 0.
pub fn weekday(ts_ms: i64) -> i64 {
    (ts_ms.div_euclid(DAY_MS) + 3).rem_euclid(7)
}

/// One simulated run: per-KPI series at one sample per minute.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub start_ms: i64,
    pub kpis: Vec<KpiModel>,
    /// `values[k][t]` for KPI `k` at minute `t`.
    pub values: Vec<Vec<f64>>,
    /// Noise-free call rate per minute.
    pub rate: Vec<f64>,
    noise: Vec<Vec<f64>>,
    pub fault: Option<FaultSpec>,
    pub activations_ms: Vec<i64>,
    pub failure_time_ms: Option<i64>,
}

impl SimRun {
    pub fn len(&self) -> usize {
        self.rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rate.is_empty()
    }

    pub fn timestamp(&self, t: usize) -> i64 {
        self.start_ms + t as i64 * MINUTE_MS
    }

    pub fn end_ms(&self) -> i64 {
        self.timestamp(self.len())
    }

    pub fn kpi_names(&self) -> Vec<String> {
        self.kpis.iter().map(|k| k.name.clone()).collect()
    }

    pub fn series(&self, kpi: &str) -> Option<&[f64]> {
        let i = self.kpis.iter().position(|k| k.name == kpi)?;
        Some(&self.values[i])
    }

    /// All samples in time order, KPIs in profile order within a minute.
    pub fn samples(&self) -> Vec<Sample> {
        let mut out = Vec::with_capacity(self.len() * self.kpis.len());
        for t in 0..self.len() {
            let ts = self.timestamp(t);
            for (k, m) in self.kpis.iter().enumerate() {
                out.push(Sample::new(ts, m.name.clone(), self.values[k][t]));
            }
        }
        out
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            fault_type: self.fault.as_ref().map(|f| f.fault_type),
            activation: self.fault.as_ref().map(|f| f.activation),
            start_ms: self.fault.as_ref().map(|f| f.start_ms),
            failure_time_ms: self.failure_time_ms,
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        match (&self.fault, self.failure_time_ms) {
            (Some(f), Some(failure)) => GroundTruth::Failing {
                fault_start_ms: f.start_ms,
                failure_time_ms: failure,
            },
            _ => GroundTruth::Normal,
        }
    }

    pub fn to_labeled(&self, run_id: impl Into<String>) -> LabeledRun {
        LabeledRun {
            run_id: run_id.into(),
            fault_type: self.fault.as_ref().map(|f| f.fault_type.to_string()),
            truth: Some(self.ground_truth()),
            start_ms: self.start_ms,
            step_ms: MINUTE_MS,
            kpis: self.kpi_names(),
            series: self.values.clone(),
        }
    }
}

/// Ground truth written next to each run's samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fault_type: Option<FaultType>,
    pub activation: Option<ActivationPattern>,
    pub start_ms: Option<i64>,
    pub failure_time_ms: Option<i64>,
}

fn finish(v: f64) -> f64 {
    (v.max(0.0) * 1000.0).round() / 1000.0
}

/// Generate a fault-free run of `minutes` samples starting at `start_ms`.
pub fn generate_normal_run(
    profile: &WorkloadProfile,
    start_ms: i64,
    minutes: usize,
    seed: u64,
) -> Result<SimRun, SimError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate: Vec<f64> = (0..minutes)
        .map(|t| profile.rate(start_ms + t as i64 * MINUTE_MS))
        .collect();
    let mut noise = vec![Vec::with_capacity(minutes); profile.kpis.len()];
    for _ in 0..minutes {
        for (k, m) in profile.kpis.iter().enumerate() {
            let n = if m.noise_std > 0.0 {
                rng.sample(Normal::new(0.0, m.noise_std).expect("valid std"))
            } else {
                0.0
            };
            noise[k].push(n);
        }
    }
    let values = profile
        .kpis
        .iter()
        .zip(&noise)
        .map(|(m, nz)| {
            rate.iter()
                .zip(nz)
                .map(|(r, n)| finish(m.base + m.coupling * r + n))
                .collect()
        })
        .collect();
    Ok(SimRun {
        start_ms,
        kpis: profile.kpis.clone(),
        values,
        rate,
        noise,
        fault: None,
        activations_ms: Vec::new(),
        failure_time_ms: None,
    })
}

/// Seven days of fault-free data from the simulation epoch.
pub fn generate_week(profile: &WorkloadProfile, seed: u64) -> Result<SimRun, SimError> {
    generate_normal_run(profile, SIM_START_MS, 7 * 24 * 60, seed)
}

/// Overlay a fault on a normal run. Samples before the fault start are left
/// untouched; the run is cut after the first sample meeting the failure condition.
pub fn inject_fault(run: &SimRun, fault: &FaultSpec) -> Result<SimRun, SimError> {
    if run.fault.is_some() {
        return Err(SimError::AlreadyFaulty);
    }
    fault.validate()?;
    if fault.start_ms < run.start_ms || fault.start_ms >= run.end_ms() {
        return Err(SimError::FaultOutsideRun {
            start_ms: fault.start_ms,
            run_start_ms: run.start_ms,
            run_end_ms: run.end_ms(),
        });
    }
    let failure_kpi = run
        .kpis
        .iter()
        .position(|k| k.name == fault.failure.kpi)
        .ok_or_else(|| SimError::UnknownKpi(fault.failure.kpi.clone()))?;

    let activations = activation_times(&fault.activation, fault.start_ms, run.end_ms());
    let first = ((fault.start_ms - run.start_ms) / MINUTE_MS) as usize;
    let mut out = run.clone();
    out.fault = Some(fault.clone());
    let mut next = 0usize;
    let mut level = 0u32;
    let mut failure_at = None;
    for t in first..run.len() {
        let ts = run.timestamp(t);
        while next < activations.len() && activations[next] <= ts {
            level += 1;
            next += 1;
        }
        let deltas = fault.fault_type.effects(&run.kpis, level, run.rate[t]);
        for (k, m) in run.kpis.iter().enumerate() {
            let clean = m.base + m.coupling * deltas.rate + deltas.kpi[k];
            out.values[k][t] = finish(clean + run.noise[k][t]);
        }
        if out.values[failure_kpi][t] >= fault.failure.threshold {
            failure_at = Some(t);
            break;
        }
    }
    out.activations_ms = activations[..next].to_vec();
    if let Some(t) = failure_at {
        let keep = t + 1;
        out.rate.truncate(keep);
        for v in out.values.iter_mut().chain(out.noise.iter_mut()) {
            v.truncate(keep);
        }
        out.failure_time_ms = Some(run.timestamp(t));
    }
    Ok(out)
}

/// Write `samples.csv` and `manifest.json` for a run into `dir`.
pub fn emit_run(run: &SimRun, dir: &Path) -> Result<(), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    write_csv_samples(&dir.join("samples.csv"), &run.samples())?;
    let manifest = dir.join("manifest.json");
    let body = serde_json::to_vec_pretty(&run.manifest()).expect("manifest serializes");
    std::fs::write(&manifest, body).map_err(|e| DataError::io(&manifest, e))?;
    Ok(())
}

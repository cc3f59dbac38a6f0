use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use super::{KpiModel, SimError, MINUTE_MS};

/// Memory leaked per activation, MB.
pub const LEAK_BLOCK_MB: f64 = 50.0;
/// CPU taken by each hog activation, percentage points.
pub const HOG_CPU_PCT: f64 = 6.0;
/// Fraction of calls dropped per packet-loss activation.
pub const LOSS_PER_ACTIVATION: f64 = 0.006;
/// Relative extra load per workload activation.
pub const WORKLOAD_PER_ACTIVATION: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultType {
    MemoryLeak,
    CpuHog,
    PacketLoss,
    ExcessiveWorkload,
}

impl FaultType {
    pub const ALL: [FaultType; 4] = [
        FaultType::MemoryLeak,
        FaultType::CpuHog,
        FaultType::PacketLoss,
        FaultType::ExcessiveWorkload,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaultType::MemoryLeak => "memory_leak",
            FaultType::CpuHog => "cpu_hog",
            FaultType::PacketLoss => "packet_loss",
            FaultType::ExcessiveWorkload => "excessive_workload",
        }
    }

    /// Failure condition on the default KPI set.
    pub fn default_failure(self) -> FailureCondition {
        let (kpi, threshold) = match self {
            FaultType::MemoryLeak => ("memory_bono_mb", 2250.0),
            FaultType::CpuHog => ("cpu_sprout_pct", 95.0),
            FaultType::PacketLoss => ("error_rate_pct", 10.0),
            FaultType::ExcessiveWorkload => ("calls_per_min", 1800.0),
        };
        FailureCondition {
            kpi: kpi.into(),
            threshold,
        }
    }

    /// Effective call rate and per-KPI offsets after `level` activations.
    ///
    /// - memory leak: each activation leaks a block on bono and lengthens GC pauses and tail latency;
    /// - CPU hog: each activation takes CPU on sprout, adding latency and queueing;
    /// - packet loss: a growing fraction of calls is rejected, raising the error rate,
    ///   retransmissions and latency;
    /// - excessive workload: the call rate is multiplied, moving every load-coupled KPI.
    pub(super) fn effects(self, kpis: &[KpiModel], level: u32, rate: f64) -> Effects {
        let l = f64::from(level);
        let mut fx = Effects {
            rate,
            kpi: vec![0.0; kpis.len()],
        };
        let mut add = |name: &str, v: f64| {
            if let Some(i) = kpis.iter().position(|k| k.name == name) {
                fx.kpi[i] += v;
            }
        };
        match self {
            FaultType::MemoryLeak => {
                add("memory_bono_mb", l * LEAK_BLOCK_MB);
                add("gc_pause_ms", l * 2.5);
                add("latency_p99_ms", l * 25.0);
            }
            FaultType::CpuHog => {
                add("cpu_sprout_pct", l * HOG_CPU_PCT);
                add("latency_ms", l * 6.0);
                add("queue_depth", l * 2.0);
            }
            FaultType::PacketLoss => {
                let p = (l * LOSS_PER_ACTIVATION).min(1.0);
                add("rejected_requests", p * rate);
                add("successful_calls", -p * rate);
                add("error_rate_pct", 100.0 * p);
                add("tcp_retransmits", 2.0 * p * rate);
                add("latency_ms", 300.0 * p);
            }
            FaultType::ExcessiveWorkload => {
                fx.rate = rate * (1.0 + WORKLOAD_PER_ACTIVATION * l);
            }
        }
        fx
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub(super) struct Effects {
    pub rate: f64,
    pub kpi: Vec<f64>,
}

/// How often a fault fires once it has started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum ActivationPattern {
    /// Evenly spaced activations.
    Constant { rate_per_hour: f64 },
    /// Activation frequency doubles every `doubling_minutes`.
    Exponential {
        rate_per_hour: f64,
        doubling_minutes: f64,
    },
    /// Poisson process.
    Random { rate_per_hour: f64, seed: u64 },
}

impl ActivationPattern {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationPattern::Constant { .. } => "constant",
            ActivationPattern::Exponential { .. } => "exponential",
            ActivationPattern::Random { .. } => "random",
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            ActivationPattern::Constant { rate_per_hour }
            | ActivationPattern::Random { rate_per_hour, .. } => rate_per_hour > 0.0,
            ActivationPattern::Exponential {
                rate_per_hour,
                doubling_minutes,
            } => rate_per_hour > 0.0 && doubling_minutes > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidProfile(format!(
                "activation rates must be positive: {self:?}"
            )))
        }
    }
}

/// Upper bound on generated activations; faults always reach failure long before.
pub const MAX_ACTIVATIONS: usize = 10_000;

/// Activation instants in `[start_ms, end_ms)`; the first is at `start_ms`.
pub fn activation_times(pattern: &ActivationPattern, start_ms: i64, end_ms: i64) -> Vec<i64> {
    let span_min = (end_ms - start_ms) as f64 / MINUTE_MS as f64;
    let to_ms = |minutes: f64| start_ms + (minutes * MINUTE_MS as f64).round() as i64;
    let mut out = Vec::new();
    match *pattern {
        ActivationPattern::Constant { rate_per_hour } => {
            let gap = 60.0 / rate_per_hour;
            let mut i = 0.0;
            while i * gap < span_min && out.len() < MAX_ACTIVATIONS {
                out.push(to_ms(i * gap));
                i += 1.0;
            }
        }
        ActivationPattern::Exponential {
            rate_per_hour,
            doubling_minutes,
        } => {
            // Cumulative activations N(t) = r0 T / ln2 (2^(t/T) - 1); invert at integers.
            let r0 = rate_per_hour / 60.0;
            let t_dbl = doubling_minutes;
            let mut i = 0.0;
            loop {
                let t = t_dbl * (1.0 + i * std::f64::consts::LN_2 / (r0 * t_dbl)).log2();
                if t >= span_min || out.len() >= MAX_ACTIVATIONS {
                    break;
                }
                out.push(to_ms(t));
                i += 1.0;
            }
        }
        ActivationPattern::Random {
            rate_per_hour,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gaps = Exp::new(rate_per_hour / 60.0).expect("positive rate");
            let mut t = 0.0;
            while t < span_min && out.len() < MAX_ACTIVATIONS {
                out.push(to_ms(t));
                t += rng.sample(gaps);
            }
        }
    }
    out.retain(|&ts| ts < end_ms);
    out.dedup();
    out
}

/// The system is considered failed once `kpi >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCondition {
    pub kpi: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault_type: FaultType,
    pub activation: ActivationPattern,
    pub start_ms: i64,
    pub failure: FailureCondition,
}

impl FaultSpec {
    /// A fault with its type's default failure condition.
    pub fn new(fault_type: FaultType, activation: ActivationPattern, start_ms: i64) -> Self {
        Self {
            fault_type,
            activation,
            start_ms,
            failure: fault_type.default_failure(),
        }
    }

    pub(super) fn validate(&self) -> Result<(), SimError> {
        self.activation.validate()?;
        if !self.failure.threshold.is_finite() {
            return Err(SimError::InvalidProfile("failure threshold must be finite".into()));
        }
        Ok(())
    }
}

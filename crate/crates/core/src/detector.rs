//! Streaming anomaly detectors.
//!
//! Three detectors are provided, each a pure step function over explicit state:
//!
//! - **Fixed threshold**: fires once `n` consecutive values are `>= V`, and keeps
//!   firing on every further sample of the same run.
//! - **Sigma limit**: fires when a value deviates from the mean of the `Δ`
//!   preceding samples by more than `σ` population standard deviations.
//! - **Mean shift**: fires when the means of two adjacent, non-overlapping
//!   windows of `Δ` samples differ by more than `λ` (fixed, or the population
//!   standard deviation of the older window).
//!
//! All comparisons are strict except the fixed threshold, which uses `>=`.
//! Window statistics are computed with a shifted two-pass formula (the first
//! window element is the pivot) so that constant windows produce an exact
//! mean and zero spread.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One timestamped observation of a named KPI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp_ms: i64,
    pub kpi: String,
    pub value: f64,
}

impl Sample {
    pub fn new(timestamp_ms: i64, kpi: impl Into<String>, value: f64) -> Self {
        Self {
            timestamp_ms,
            kpi: kpi.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("rejected sample: non-finite value {value} at {timestamp_ms}")]
    NonFinite { timestamp_ms: i64, value: f64 },
    #[error("timestamps not strictly increasing at index {index} ({previous} -> {current})")]
    NonMonotonic {
        index: usize,
        previous: i64,
        current: i64,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, DetectorError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedThresholdParams {
    pub threshold: f64,
    pub run_length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaLimitParams {
    pub window_size: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed(f64),
    PrevWindowStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanShiftParams {
    pub window_size: usize,
    pub lambda: LambdaMode,
}

pub const DEFAULT_SIGMA: f64 = 3.0;

impl FixedThresholdParams {
    pub fn new(threshold: f64, run_length: usize) -> Result<Self> {
        let p = Self {
            threshold,
            run_length,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(DetectorError::InvalidParams("threshold must be finite".into()));
        }
        if self.run_length < 1 {
            return Err(DetectorError::InvalidParams("run_length must be >= 1".into()));
        }
        Ok(())
    }
}

impl SigmaLimitParams {
    pub fn new(window_size: usize, sigma: f64) -> Result<Self> {
        let p = Self { window_size, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(DetectorError::InvalidParams("window_size must be >= 2".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(DetectorError::InvalidParams("sigma must be > 0".into()));
        }
        Ok(())
    }
}

impl MeanShiftParams {
    pub fn new(window_size: usize, lambda: LambdaMode) -> Result<Self> {
        let p = Self {
            window_size,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 1 {
            return Err(DetectorError::InvalidParams("window_size must be >= 1".into()));
        }
        if let LambdaMode::Fixed(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(DetectorError::InvalidParams("lambda must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Typed parameters of one of the built-in analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum AnalysisParams {
    FixedThreshold(FixedThresholdParams),
    SigmaLimit(SigmaLimitParams),
    MeanShift(MeanShiftParams),
}

impl AnalysisParams {
    pub fn analysis_name(&self) -> &'static str {
        match self {
            AnalysisParams::FixedThreshold(_) => "fixed_threshold",
            AnalysisParams::SigmaLimit(_) => "sigma_limit",
            AnalysisParams::MeanShift(_) => "mean_shift",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AnalysisParams::FixedThreshold(p) => p.validate(),
            AnalysisParams::SigmaLimit(p) => p.validate(),
            AnalysisParams::MeanShift(p) => p.validate(),
        }
    }

    pub fn initial_state(&self) -> DetectorState {
        match self {
            AnalysisParams::FixedThreshold(_) => DetectorState::FixedThreshold { run: 0 },
            AnalysisParams::SigmaLimit(p) => DetectorState::SigmaLimit {
                window: VecDeque::with_capacity(p.window_size),
            },
            AnalysisParams::MeanShift(p) => DetectorState::MeanShift {
                window: VecDeque::with_capacity(2 * p.window_size),
            },
        }
    }

    /// Number of leading samples that can never fire.
    pub fn warm_up(&self) -> usize {
        match self {
            AnalysisParams::FixedThreshold(p) => p.run_length - 1,
            AnalysisParams::SigmaLimit(p) => p.window_size,
            AnalysisParams::MeanShift(p) => 2 * p.window_size - 1,
        }
    }
}

/// Rolling state of one detector instance.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorState {
    FixedThreshold { run: u64 },
    SigmaLimit { window: VecDeque<f64> },
    MeanShift { window: VecDeque<f64> },
}

/// Outcome of checking one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub fired: bool,
    /// Ratio of the observed deviation to the threshold; 0 when not applicable.
    pub score: f64,
    pub threshold_used: f64,
    pub observed: f64,
}

impl Verdict {
    fn quiet(observed: f64, threshold_used: f64) -> Self {
        Self {
            fired: false,
            score: 0.0,
            threshold_used,
            observed,
        }
    }

    fn compare(observed: f64, deviation: f64, threshold: f64) -> Self {
        Self {
            fired: deviation > threshold,
            score: ratio(deviation, threshold),
            threshold_used: threshold,
            observed,
        }
    }
}

fn ratio(deviation: f64, threshold: f64) -> f64 {
    if threshold > 0.0 {
        (deviation / threshold).max(0.0)
    } else {
        0.0
    }
}

fn check_finite(s: &Sample) -> Result<()> {
    if s.value.is_finite() {
        Ok(())
    } else {
        Err(DetectorError::NonFinite {
            timestamp_ms: s.timestamp_ms,
            value: s.value,
        })
    }
}

/// Mean and population standard deviation of a window, pivoted on its first element.
pub(crate) fn window_stats<'a, I>(values: I) -> (f64, f64)
where
    I: Iterator<Item = &'a f64> + Clone,
{
    let mut it = values.clone();
    let Some(&pivot) = it.next() else {
        return (0.0, 0.0);
    };
    let mut n = 0usize;
    let mut shifted = 0.0;
    for v in values.clone() {
        shifted += v - pivot;
        n += 1;
    }
    let nf = n as f64;
    let offset = shifted / nf;
    let mean = pivot + offset;
    let mut ss = 0.0;
    for v in values {
        let d = (v - pivot) - offset;
        ss += d * d;
    }
    (mean, (ss / nf).sqrt())
}

/// Advance a fixed-threshold detector by one sample.
pub fn step_fixed_threshold(
    run: &mut u64,
    params: &FixedThresholdParams,
    s: &Sample,
) -> Result<Verdict> {
    check_finite(s)?;
    if s.value >= params.threshold {
        *run = run.saturating_add(1);
    } else {
        *run = 0;
    }
    let fired = *run >= params.run_length as u64;
    let v = params.threshold;
    let score = if v == 0.0 {
        0.0
    } else {
        (1.0 + (s.value - v) / v.abs()).max(0.0)
    };
    Ok(Verdict {
        fired,
        score,
        threshold_used: v,
        observed: s.value,
    })
}

/// Advance a sigma-limit detector by one sample.
///
/// `window` holds the samples strictly preceding `s`, at most `window_size` of them.
pub fn step_sigma_limit(
    window: &mut VecDeque<f64>,
    params: &SigmaLimitParams,
    s: &Sample,
) -> Result<Verdict> {
    check_finite(s)?;
    let verdict = if window.len() < params.window_size {
        Verdict::quiet(s.value, 0.0)
    } else {
        let (mean, std) = window_stats(window.iter());
        Verdict::compare(s.value, (s.value - mean).abs(), params.sigma * std)
    };
    if window.len() == params.window_size {
        window.pop_front();
    }
    window.push_back(s.value);
    Ok(verdict)
}

/// Advance a mean-shift detector by one sample.
///
/// `window` holds up to `2 * window_size` most recent samples including `s`.
pub fn step_mean_shift(
    window: &mut VecDeque<f64>,
    params: &MeanShiftParams,
    s: &Sample,
) -> Result<Verdict> {
    check_finite(s)?;
    let cap = 2 * params.window_size;
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(s.value);
    if window.len() < cap {
        let threshold = match params.lambda {
            LambdaMode::Fixed(l) => l,
            LambdaMode::PrevWindowStd => 0.0,
        };
        return Ok(Verdict::quiet(s.value, threshold));
    }
    let previous = window.range(..params.window_size);
    let current = window.range(params.window_size..);
    let (prev_mean, prev_std) = window_stats(previous);
    let (cur_mean, _) = window_stats(current);
    let lambda = match params.lambda {
        LambdaMode::Fixed(l) => l,
        LambdaMode::PrevWindowStd => prev_std,
    };
    Ok(Verdict::compare(s.value, (prev_mean - cur_mean).abs(), lambda))
}

/// A detector instance: parameters plus the state it owns.
#[derive(Debug, Clone)]
pub struct Detector {
    params: AnalysisParams,
    state: DetectorState,
}

impl Detector {
    pub fn new(params: AnalysisParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            state: params.initial_state(),
            params,
        })
    }

    pub fn params(&self) -> &AnalysisParams {
        &self.params
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Check one sample. On error the state is left untouched.
    pub fn step(&mut self, s: &Sample) -> Result<Verdict> {
        match (&self.params, &mut self.state) {
            (AnalysisParams::FixedThreshold(p), DetectorState::FixedThreshold { run }) => {
                step_fixed_threshold(run, p, s)
            }
            (AnalysisParams::SigmaLimit(p), DetectorState::SigmaLimit { window }) => {
                step_sigma_limit(window, p, s)
            }
            (AnalysisParams::MeanShift(p), DetectorState::MeanShift { window }) => {
                step_mean_shift(window, p, s)
            }
            _ => unreachable!("detector state always matches its params"),
        }
    }
}

/// Fold the step function over a whole series and keep the fired verdicts.
pub fn detect_batch(params: &AnalysisParams, series: &[Sample]) -> Result<Vec<(usize, Verdict)>> {
    for (i, pair) in series.windows(2).enumerate() {
        if pair[1].timestamp_ms <= pair[0].timestamp_ms {
            return Err(DetectorError::NonMonotonic {
                index: i + 1,
                previous: pair[0].timestamp_ms,
                current: pair[1].timestamp_ms,
            });
        }
    }
    let mut detector = Detector::new(*params)?;
    let mut fired = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let v = detector.step(s)?;
        if v.fired {
            fired.push((i, v));
        }
    }
    Ok(fired)
}

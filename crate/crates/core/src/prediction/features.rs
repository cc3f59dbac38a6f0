use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PredictionError;
use crate::data_io::AnomalyRecord;

pub const MINUTE_MS: i64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowLabel {
    Normal,
    Failing,
}

/// Per-KPI anomaly counts over the half-open interval `[window_start_ms, window_end_ms)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub window_start_ms: i64,
    pub window_end_ms: i64,
    pub counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<WindowLabel>,
}

impl FeatureWindow {
    pub fn features(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// What to do with anomalies on a KPI that is not in the feature ordering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownKpiPolicy {
    #[default]
    Error,
    Drop,
}

/// Geometry of the sliding windows laid over `[from_ms, to_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub window_ms: i64,
    pub step_ms: i64,
    pub from_ms: i64,
    pub to_ms: i64,
}

impl WindowSpec {
    /// Windows of `window_minutes` advancing one minute at a time.
    pub fn minutes(window_minutes: u32, from_ms: i64, to_ms: i64) -> Self {
        Self {
            window_ms: i64::from(window_minutes) * MINUTE_MS,
            step_ms: MINUTE_MS,
            from_ms,
            to_ms,
        }
    }

    fn validate(&self) -> Result<(), PredictionError> {
        if self.window_ms <= 0 || self.step_ms <= 0 || self.step_ms > self.window_ms {
            return Err(PredictionError::InvalidParams(format!(
                "need 0 < step ({}) <= window ({})",
                self.step_ms, self.window_ms
            )));
        }
        Ok(())
    }

    /// Start of every window that fits entirely inside the span.
    pub fn starts(&self) -> impl Iterator<Item = i64> {
        let Self {
            window_ms,
            step_ms,
            from_ms,
            to_ms,
        } = *self;
        (0..)
            .map(move |i| from_ms + i * step_ms)
            .take_while(move |s| s + window_ms <= to_ms)
    }
}

/// Slide fixed-length windows over an anomaly stream and count anomalies per KPI.
pub fn extract_windows(
    anomalies: &[AnomalyRecord],
    kpi_order: &[String],
    spec: WindowSpec,
    policy: UnknownKpiPolicy,
) -> Result<Vec<FeatureWindow>, PredictionError> {
    spec.validate()?;
    let index: HashMap<&str, usize> = kpi_order
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    let mut times: Vec<Vec<i64>> = vec![Vec::new(); kpi_order.len()];
    for a in anomalies {
        match index.get(a.kpi.as_str()) {
            Some(&i) => times[i].push(a.timestamp_ms),
            None if policy == UnknownKpiPolicy::Drop => {}
            None => return Err(PredictionError::UnknownKpi(a.kpi.clone())),
        }
    }
    for t in &mut times {
        t.sort_unstable();
    }
    let count = |t: &[i64], lo: i64, hi: i64| {
        (t.partition_point(|&x| x < hi) - t.partition_point(|&x| x < lo)) as u32
    };
    Ok(spec
        .starts()
        .map(|start| {
            let end = start + spec.window_ms;
            FeatureWindow {
                window_start_ms: start,
                window_end_ms: end,
                counts: times.iter().map(|t| count(t, start, end)).collect(),
                label: None,
            }
        })
        .collect())
}

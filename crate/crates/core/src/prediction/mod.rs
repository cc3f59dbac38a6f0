//! Failure prediction from anomaly streams.
//!
//! Anomalies are counted per KPI over sliding windows, a novelty model trained
//! on failure-free windows flags unusual windows, and a stability filter turns
//! the raw flags into failure predictions that are scored against ground truth.

mod centroid;
mod eval;
mod features;
mod grid;
mod ocsvm;
mod stability;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use centroid::{quantile_sorted, CentroidModel};
pub use eval::{evaluate, EvalReport, GroundTruth, LeadTimeSummary, RunOutcome, RunPredictions};
pub use features::{
    extract_windows, FeatureWindow, UnknownKpiPolicy, WindowLabel, WindowSpec, MINUTE_MS,
};
pub use grid::{
    detect_anomalies, grid_sweep, run_cell, CellReport, GridConfig, LabeledRun, DEFAULT_PASTS,
    DEFAULT_WINDOWS,
};
pub use ocsvm::{rbf, solve_dual, DualSolution, OcSvmModel, OcSvmParams, Standardizer, SvmSummary};
pub use stability::{
    prediction_events, stability_filter, stable_mask, PredictionEvent, StableRun,
    DEFAULT_STABILITY,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("anomaly on unknown KPI {0:?}")]
    UnknownKpi(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("solver did not converge after {iterations} iterations (KKT gap {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("run {0} has no ground truth")]
    MissingGroundTruth(String),
    #[error("detector failed: {0}")]
    Detector(String),
}

/// All points must share one dimension; returns it.
pub(crate) fn check_dims(points: &[Vec<f64>]) -> Result<usize, PredictionError> {
    let first = points.first().ok_or(PredictionError::EmptyTraining)?;
    let dim = first.len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(PredictionError::InvalidParams(format!(
            "mixed dimensions {dim} and {}",
            bad.len()
        )));
    }
    Ok(dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    CentroidQuantile {
        #[serde(default = "default_quantile")]
        q: f64,
    },
    OneClassSvm(OcSvmParams),
}

fn default_quantile() -> f64 {
    0.95
}

impl Default for ModelKind {
    fn default() -> Self {
        ModelKind::CentroidQuantile { q: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoveltyModelParams {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_window")]
    pub window_minutes: u32,
    #[serde(default = "default_past")]
    pub past_data_minutes: u32,
}

fn default_window() -> u32 {
    20
}

fn default_past() -> u32 {
    10
}

impl Default for NoveltyModelParams {
    fn default() -> Self {
        Self {
            model: ModelKind::default(),
            window_minutes: default_window(),
            past_data_minutes: default_past(),
        }
    }
}

/// A fitted novelty model behind one fit/predict contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoveltyModel {
    CentroidQuantile(CentroidModel),
    OneClassSvm(OcSvmModel),
}

impl NoveltyModel {
    pub fn fit(kind: &ModelKind, train: &[FeatureWindow]) -> Result<Self, PredictionError> {
        let points: Vec<Vec<f64>> = train.iter().map(FeatureWindow::features).collect();
        Ok(match kind {
            ModelKind::CentroidQuantile { q } => {
                NoveltyModel::CentroidQuantile(CentroidModel::fit(&points, *q)?)
            }
            ModelKind::OneClassSvm(p) => NoveltyModel::OneClassSvm(OcSvmModel::fit(&points, p)?),
        })
    }

    pub fn is_novel(&self, x: &[f64]) -> bool {
        match self {
            NoveltyModel::CentroidQuantile(m) => m.is_novel(x),
            NoveltyModel::OneClassSvm(m) => m.is_novel(x),
        }
    }

    /// Predict every window, evaluating each distinct count vector once.
    pub fn predict_windows(&self, windows: &[FeatureWindow]) -> Vec<bool> {
        let mut cache: HashMap<&[u32], bool> = HashMap::new();
        windows
            .iter()
            .map(|w| {
                *cache
                    .entry(w.counts.as_slice())
                    .or_insert_with(|| self.is_novel(&w.features()))
            })
            .collect()
    }
}

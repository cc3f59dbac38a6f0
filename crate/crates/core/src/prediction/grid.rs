use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate, extract_windows, EvalReport, GroundTruth, ModelKind, NoveltyModel, OcSvmParams,
    PredictionError, RunPredictions, SvmSummary, UnknownKpiPolicy, WindowSpec, DEFAULT_STABILITY,
};
use crate::control::detector_id;
use crate::data_io::{AnomalyRecord, SinkSpec, SourceSpec};
use crate::detector::{detect_batch, AnalysisParams, Sample, SigmaLimitParams};
use crate::registry::params_to_map;

pub const DEFAULT_WINDOWS: [u32; 3] = [15, 20, 25];
pub const DEFAULT_PASTS: [u32; 4] = [10, 20, 50, 100];

/// KPI series of one run sampled on a regular grid, plus what is known about it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRun {
    pub run_id: String,
    pub fault_type: Option<String>,
    pub truth: Option<GroundTruth>,
    pub start_ms: i64,
    pub step_ms: i64,
    pub kpis: Vec<String>,
    /// `series[k][t]` is KPI `k` at `start_ms + t * step_ms`.
    pub series: Vec<Vec<f64>>,
}

impl LabeledRun {
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Exclusive end of the covered time span.
    pub fn end_ms(&self) -> i64 {
        self.start_ms + self.len() as i64 * self.step_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub windows: Vec<u32>,
    pub pasts: Vec<u32>,
    pub sigma: f64,
    pub model: ModelKind,
    pub stability_k: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            windows: DEFAULT_WINDOWS.to_vec(),
            pasts: DEFAULT_PASTS.to_vec(),
            sigma: 3.0,
            model: ModelKind::OneClassSvm(OcSvmParams::default()),
            stability_k: DEFAULT_STABILITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub window_minutes: u32,
    pub past_minutes: u32,
    pub training_windows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm: Option<SvmSummary>,
    pub report: EvalReport,
}

/// Run a sigma-limit detector with a `past`-sample history on every KPI of a run.
pub fn detect_anomalies(
    run: &LabeledRun,
    past: u32,
    sigma: f64,
) -> Result<Vec<AnomalyRecord>, PredictionError> {
    let params = AnalysisParams::SigmaLimit(
        SigmaLimitParams::new(past as usize, sigma)
            .map_err(|e| PredictionError::InvalidParams(e.to_string()))?,
    );
    let map = params_to_map(&params);
    let source = SourceSpec::Bus {
        topic: format!("{}/samples", run.run_id),
    };
    let sink = SinkSpec::Bus {
        topic: format!("{}/anomalies", run.run_id),
    };
    let mut out = Vec::new();
    for (kpi, values) in run.kpis.iter().zip(&run.series) {
        let samples: Vec<Sample> = values
            .iter()
            .enumerate()
            .map(|(t, &v)| Sample::new(run.start_ms + t as i64 * run.step_ms, kpi.clone(), v))
            .collect();
        let id = detector_id(kpi, params.analysis_name(), &map, &source, &sink);
        let fired =
            detect_batch(&params, &samples).map_err(|e| PredictionError::Detector(e.to_string()))?;
        out.extend(fired.into_iter().map(|(i, v)| AnomalyRecord {
            timestamp_ms: samples[i].timestamp_ms,
            detector_id: id.clone(),
            kpi: kpi.clone(),
            analysis: params.analysis_name().to_owned(),
            observed: v.observed,
            threshold: v.threshold_used,
            score: v.score,
        }));
    }
    out.sort_by_key(|a| a.timestamp_ms);
    Ok(out)
}

fn windows_of(
    run: &LabeledRun,
    anomalies: &[AnomalyRecord],
    window_minutes: u32,
) -> Result<Vec<super::FeatureWindow>, PredictionError> {
    extract_windows(
        anomalies,
        &run.kpis,
        WindowSpec::minutes(window_minutes, run.start_ms, run.end_ms()),
        UnknownKpiPolicy::Error,
    )
}

/// Evaluate one (window, past) cell from precomputed anomaly streams.
fn cell_from_anomalies(
    train: (&LabeledRun, &[AnomalyRecord]),
    eval: &[(&LabeledRun, &[AnomalyRecord])],
    window_minutes: u32,
    past_minutes: u32,
    config: &GridConfig,
) -> Result<CellReport, PredictionError> {
    let train_windows = windows_of(train.0, train.1, window_minutes)?;
    let model = NoveltyModel::fit(&config.model, &train_windows)?;
    let predictions = eval
        .iter()
        .map(|(run, anomalies)| {
            let windows = windows_of(run, anomalies, window_minutes)?;
            Ok(RunPredictions {
                run_id: run.run_id.clone(),
                fault_type: run.fault_type.clone(),
                truth: run.truth,
                window_end_ms: windows.iter().map(|w| w.window_end_ms).collect(),
                raw: model.predict_windows(&windows),
            })
        })
        .collect::<Result<Vec<_>, PredictionError>>()?;
    Ok(CellReport {
        window_minutes,
        past_minutes,
        training_windows: train_windows.len(),
        svm: match &model {
            NoveltyModel::OneClassSvm(m) => Some(m.summary.clone()),
            NoveltyModel::CentroidQuantile(_) => None,
        },
        report: evaluate(&predictions, config.stability_k)?,
    })
}

/// Detect, window, train on `train` and evaluate on `eval` for one grid cell.
pub fn run_cell(
    train: &LabeledRun,
    eval: &[LabeledRun],
    window_minutes: u32,
    past_minutes: u32,
    config: &GridConfig,
) -> Result<CellReport, PredictionError> {
    let train_anoms = detect_anomalies(train, past_minutes, config.sigma)?;
    let eval_anoms = eval
        .iter()
        .map(|r| detect_anomalies(r, past_minutes, config.sigma))
        .collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<_> = eval
        .iter()
        .zip(&eval_anoms)
        .map(|(r, a)| (r, a.as_slice()))
        .collect();
    cell_from_anomalies(
        (train, &train_anoms),
        &pairs,
        window_minutes,
        past_minutes,
        config,
    )
}

/// Evaluate every (window, past) combination. Detector output is computed once
/// per past value and shared by all window sizes; cells run in parallel.
pub fn grid_sweep(
    train: &LabeledRun,
    eval: &[LabeledRun],
    config: &GridConfig,
) -> Result<Vec<CellReport>, PredictionError> {
    let runs: Vec<&LabeledRun> = std::iter::once(train).chain(eval).collect();
    let jobs: Vec<(u32, &LabeledRun)> = config
        .pasts
        .iter()
        .flat_map(|&p| runs.iter().map(move |&r| (p, r)))
        .collect();
    let anomalies = jobs
        .par_iter()
        .map(|&(p, r)| detect_anomalies(r, p, config.sigma))
        .collect::<Result<Vec<_>, _>>()?;
    let per_past = |pi: usize| &anomalies[pi * runs.len()..(pi + 1) * runs.len()];

    let cells: Vec<(u32, usize)> = config
        .windows
        .iter()
        .flat_map(|&w| (0..config.pasts.len()).map(move |pi| (w, pi)))
        .collect();
    cells
        .par_iter()
        .map(|&(w, pi)| {
            let anoms = per_past(pi);
            let pairs: Vec<_> = eval
                .iter()
                .zip(&anoms[1..])
                .map(|(r, a)| (r, a.as_slice()))
                .collect();
            cell_from_anomalies((train, &anoms[0]), &pairs, w, config.pasts[pi], config)
        })
        .collect()
}

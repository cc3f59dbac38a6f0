use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stability::{stability_filter, stable_mask};
use super::PredictionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Normal,
    Failing {
        fault_start_ms: i64,
        failure_time_ms: i64,
    },
}

/// Raw model output for every window of one run. A window is identified by its
/// end time, the earliest moment its prediction is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPredictions {
    pub run_id: String,
    pub fault_type: Option<String>,
    pub truth: Option<GroundTruth>,
    pub window_end_ms: Vec<i64>,
    pub raw: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub fault_type: Option<String>,
    pub windows: usize,
    pub raw_positives: usize,
    pub stable_windows: usize,
    pub events: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Windows after fault activation and up to the failure.
    pub faulty_windows: usize,
    pub faulty_hits: usize,
    pub first_stable_ms: Option<i64>,
    /// `None` when no stable prediction preceded the failure.
    pub lead_time_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeSummary {
    pub fault_type: String,
    pub runs: usize,
    pub predicted: usize,
    pub mean_lead_time_ms: Option<f64>,
    pub min_lead_time_ms: Option<i64>,
    pub max_lead_time_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stability_k: usize,
    /// True-positive stable windows over all stable windows; `None` when nothing was predicted.
    pub precision: Option<f64>,
    /// Stable windows over faulty-phase windows; `None` without failing runs.
    pub recall: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub faulty_windows: usize,
    pub faulty_hits: usize,
    pub normal_windows: usize,
    pub normal_false_stable: usize,
    pub normal_false_rate: Option<f64>,
    pub lead_times: Vec<LeadTimeSummary>,
    pub runs: Vec<RunOutcome>,
}

impl EvalReport {
    pub fn failing_runs(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.fault_type.is_some())
    }

    pub fn predicted_failures(&self) -> usize {
        self.failing_runs().filter(|r| r.lead_time_ms.is_some()).count()
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn evaluate_run(run: &RunPredictions, k: usize) -> Result<RunOutcome, PredictionError> {
    if run.raw.len() != run.window_end_ms.len() {
        return Err(PredictionError::InvalidParams(format!(
            "run {}: {} predictions for {} windows",
            run.run_id,
            run.raw.len(),
            run.window_end_ms.len()
        )));
    }
    let truth = run
        .truth
        .ok_or_else(|| PredictionError::MissingGroundTruth(run.run_id.clone()))?;
    let mask = stable_mask(&run.raw, k);
    let mut out = RunOutcome {
        run_id: run.run_id.clone(),
        fault_type: run.fault_type.clone(),
        windows: run.raw.len(),
        raw_positives: run.raw.iter().filter(|&&r| r).count(),
        stable_windows: mask.iter().filter(|&&m| m).count(),
        events: stability_filter(&run.raw, k).len(),
        true_positives: 0,
        false_positives: 0,
        faulty_windows: 0,
        faulty_hits: 0,
        first_stable_ms: None,
        lead_time_ms: None,
    };
    match truth {
        GroundTruth::Normal => out.false_positives = out.stable_windows,
        GroundTruth::Failing {
            fault_start_ms,
            failure_time_ms,
        } => {
            if fault_start_ms >= failure_time_ms {
                return Err(PredictionError::InvalidParams(format!(
                    "run {}: fault start {fault_start_ms} not before failure {failure_time_ms}",
                    run.run_id
                )));
            }
            for (&end, &stable) in run.window_end_ms.iter().zip(&mask) {
                let faulty = end > fault_start_ms && end <= failure_time_ms;
                if faulty {
                    out.faulty_windows += 1;
                }
                if !stable {
                    continue;
                }
                if faulty {
                    out.true_positives += 1;
                    out.faulty_hits += 1;
                    if out.first_stable_ms.is_none() {
                        out.first_stable_ms = Some(end);
                        out.lead_time_ms = Some(failure_time_ms - end);
                    }
                } else if end <= fault_start_ms {
                    out.false_positives += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Score stable predictions against the ground truth of every run.
pub fn evaluate(runs: &[RunPredictions], k: usize) -> Result<EvalReport, PredictionError> {
    if k == 0 {
        return Err(PredictionError::InvalidParams("stability k must be >= 1".into()));
    }
    let mut outcomes = runs
        .iter()
        .map(|r| evaluate_run(r, k))
        .collect::<Result<Vec<_>, _>>()?;
    outcomes.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    let sum = |f: fn(&RunOutcome) -> usize| outcomes.iter().map(f).sum::<usize>();
    let tp = sum(|r| r.true_positives);
    let fp = sum(|r| r.false_positives);
    let faulty = sum(|r| r.faulty_windows);
    let hits = sum(|r| r.faulty_hits);
    let normal: Vec<&RunOutcome> = outcomes.iter().filter(|r| r.fault_type.is_none()).collect();
    let normal_windows = normal.iter().map(|r| r.windows).sum();
    let normal_false = normal.iter().map(|r| r.stable_windows).sum();

    let mut by_fault: BTreeMap<&str, Vec<Option<i64>>> = BTreeMap::new();
    for r in &outcomes {
        if let Some(f) = &r.fault_type {
            by_fault.entry(f).or_default().push(r.lead_time_ms);
        }
    }
    let lead_times = by_fault
        .into_iter()
        .map(|(fault, leads)| {
            let got: Vec<i64> = leads.iter().flatten().copied().collect();
            LeadTimeSummary {
                fault_type: fault.to_owned(),
                runs: leads.len(),
                predicted: got.len(),
                mean_lead_time_ms: (!got.is_empty())
                    .then(|| got.iter().sum::<i64>() as f64 / got.len() as f64),
                min_lead_time_ms: got.iter().min().copied(),
                max_lead_time_ms: got.iter().max().copied(),
            }
        })
        .collect();

    Ok(EvalReport {
        stability_k: k,
        precision: ratio(tp, tp + fp),
        recall: ratio(hits, faulty),
        true_positives: tp,
        false_positives: fp,
        faulty_windows: faulty,
        faulty_hits: hits,
        normal_windows,
        normal_false_stable: normal_false,
        normal_false_rate: ratio(normal_false, normal_windows),
        lead_times,
        runs: outcomes,
    })
}

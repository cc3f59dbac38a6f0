//! The end-to-end evaluation: simulate the runs, detect anomalies, sweep the
//! (window, past) grid and write the reports.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::DataError;
use crate::prediction::{grid_sweep, CellReport, GridConfig, LabeledRun, PredictionError};
use crate::sim::{
    emit_run, generate_normal_run, inject_fault, ActivationPattern, FaultSpec, FaultType, SimError,
    SimRun, WorkloadProfile, DAY_MS, MINUTE_MS, SIM_START_MS,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("reference cell W={0}, past={1} is not part of the grid")]
    MissingReference(u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub days: u32,
    /// Length of the fault-free training run.
    pub training_days: u32,
    pub profile: WorkloadProfile,
    /// Initial activation rate of every injected fault.
    pub activation_rate_per_hour: f64,
    pub doubling_minutes: f64,
    pub grid: GridConfig,
    pub reference_window: u32,
    pub reference_past: u32,
    /// Write every run's samples and manifest next to the reports.
    pub emit_runs: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            days: 7,
            training_days: 14,
            profile: WorkloadProfile::default(),
            activation_rate_per_hour: 6.0,
            doubling_minutes: 60.0,
            grid: GridConfig::default(),
            reference_window: 20,
            reference_past: 10,
            emit_runs: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub id: String,
    pub run: SimRun,
}

/// The training run and the thirteen evaluation runs (one normal, twelve faulty).
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub training: ExperimentRun,
    pub evaluation: Vec<ExperimentRun>,
}

impl ExperimentData {
    pub fn labeled_training(&self) -> LabeledRun {
        self.training.run.to_labeled(&self.training.id)
    }

    pub fn labeled_evaluation(&self) -> Vec<LabeledRun> {
        self.evaluation
            .iter()
            .map(|r| r.run.to_labeled(&r.id))
            .collect()
    }
}

fn patterns(cfg: &ExperimentConfig, salt: u64) -> [ActivationPattern; 3] {
    let rate_per_hour = cfg.activation_rate_per_hour;
    [
        ActivationPattern::Constant { rate_per_hour },
        ActivationPattern::Exponential {
            rate_per_hour,
            doubling_minutes: cfg.doubling_minutes,
        },
        ActivationPattern::Random {
            rate_per_hour,
            seed: cfg.seed.wrapping_add(1000 + salt),
        },
    ]
}

/// Faults start on a weekday morning between 09:00 and 11:00, from Tuesday to
/// Friday as far as the run length allows.
fn fault_start(i: usize, days: u32) -> i64 {
    let spread = (days.saturating_sub(1) as usize).clamp(1, 4);
    let day = 1 + (i % spread) as i64;
    let minute = 9 * 60 + ((i * 23) % 120) as i64;
    SIM_START_MS + day * DAY_MS + minute * MINUTE_MS
}

pub fn generate_data(cfg: &ExperimentConfig) -> Result<ExperimentData, ExperimentError> {
    let minutes = cfg.days as usize * 24 * 60;
    let profile = &cfg.profile;
    let training = generate_normal_run(
        profile,
        SIM_START_MS,
        cfg.training_days as usize * 24 * 60,
        cfg.seed,
    )?;

    let mut specs: Vec<(String, Option<FaultSpec>)> = vec![("normal".into(), None)];
    let mut i = 0;
    for ft in FaultType::ALL {
        for pattern in patterns(cfg, i as u64) {
            specs.push((
                format!("{}-{}", ft.name(), pattern.name()),
                Some(FaultSpec::new(ft, pattern, fault_start(i, cfg.days))),
            ));
            i += 1;
        }
    }
    let evaluation = specs
        .into_par_iter()
        .enumerate()
        .map(|(n, (id, fault))| {
            let seed = cfg.seed.wrapping_add(1 + n as u64);
            let normal = generate_normal_run(profile, SIM_START_MS, minutes, seed)?;
            let run = match fault {
                Some(f) => inject_fault(&normal, &f)?,
                None => normal,
            };
            Ok(ExperimentRun {
                id: format!("{n:02}-{id}"),
                run,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(ExperimentData {
        training: ExperimentRun {
            id: "training".into(),
            run: training,
        },
        evaluation,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub fault_type: Option<FaultType>,
    pub activation: Option<ActivationPattern>,
    pub start_ms: Option<i64>,
    pub failure_time_ms: Option<i64>,
    pub minutes: usize,
    pub activations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub cells: Vec<CellReport>,
}

impl ExperimentResult {
    pub fn cell(&self, window: u32, past: u32) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.window_minutes == window && c.past_minutes == past)
    }

    pub fn reference(&self) -> Option<&CellReport> {
        self.cell(self.config.reference_window, self.config.reference_past)
    }
}

pub fn evaluate_data(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<ExperimentResult, ExperimentError> {
    let cells = grid_sweep(&data.labeled_training(), &data.labeled_evaluation(), &cfg.grid)?;
    let runs = data
        .evaluation
        .iter()
        .map(|r| RunSummary {
            id: r.id.clone(),
            fault_type: r.run.fault.as_ref().map(|f| f.fault_type),
            activation: r.run.fault.as_ref().map(|f| f.activation),
            start_ms: r.run.fault.as_ref().map(|f| f.start_ms),
            failure_time_ms: r.run.failure_time_ms,
            minutes: r.run.len(),
            activations: r.run.activations_ms.len(),
        })
        .collect();
    let result = ExperimentResult {
        config: cfg.clone(),
        runs,
        cells,
    };
    if result.reference().is_none() {
        return Err(ExperimentError::MissingReference(
            cfg.reference_window,
            cfg.reference_past,
        ));
    }
    Ok(result)
}

/// Generate, evaluate and, when `out` is given, write everything under it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<ExperimentResult, ExperimentError> {
    let data = generate_data(cfg)?;
    let result = evaluate_data(cfg, &data)?;
    if let Some(dir) = out {
        if cfg.emit_runs {
            emit_run(&data.training.run, &dir.join("training"))?;
            data.evaluation
                .par_iter()
                .try_for_each(|r| emit_run(&r.run, &dir.join("runs").join(&r.id)))?;
        }
        write_reports(&result, dir)?;
    }
    Ok(result)
}

fn fmt_metric(m: Option<f64>) -> String {
    m.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, DataError> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| DataError::io(path, e))
}

/// `grid.csv`, `lead_times.csv` and `summary.json`.
pub fn write_reports(result: &ExperimentResult, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;

    let path = dir.join("grid.csv");
    let mut f = create(&path)?;
    let io = |e| DataError::io(&path, e);
    writeln!(f, "W,past,precision,recall").map_err(io)?;
    for c in &result.cells {
        writeln!(
            f,
            "{},{},{},{}",
            c.window_minutes,
            c.past_minutes,
            fmt_metric(c.report.precision),
            fmt_metric(c.report.recall)
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)?;

    let path = dir.join("lead_times.csv");
    let mut f = create(&path)?;
    let io = |e| DataError::io(&path, e);
    writeln!(f, "fault_type,runs,predicted,mean_lead_time_min").map_err(io)?;
    if let Some(reference) = result.reference() {
        for l in &reference.report.lead_times {
            let mean = l
                .mean_lead_time_ms
                .map(|ms| format!("{:.1}", ms / MINUTE_MS as f64))
                .unwrap_or_default();
            writeln!(f, "{},{},{},{}", l.fault_type, l.runs, l.predicted, mean).map_err(io)?;
        }
    }
    f.flush().map_err(io)?;

    let path = dir.join("summary.json");
    let body = serde_json::to_vec_pretty(result).expect("result serializes");
    std::fs::write(&path, body).map_err(|e| DataError::io(&path, e))
}

/// Human-readable digest of the reference cell.
pub fn summary_text(result: &ExperimentResult) -> String {
    let mut s = String::new();
    let Some(c) = result.reference() else {
        return s;
    };
    let r = &c.report;
    s.push_str(&format!(
        "reference cell W={} past={}: precision {} recall {} (k={})\n",
        c.window_minutes,
        c.past_minutes,
        fmt_metric(r.precision),
        fmt_metric(r.recall),
        r.stability_k
    ));
    s.push_str(&format!(
        "failing runs predicted before failure: {}/{}\n",
        r.predicted_failures(),
        r.failing_runs().count()
    ));
    s.push_str(&format!(
        "false stable windows on normal run: {}/{} ({})\n",
        r.normal_false_stable,
        r.normal_windows,
        fmt_metric(r.normal_false_rate)
    ));
    for l in &r.lead_times {
        let mean = l
            .mean_lead_time_ms
            .map(|ms| format!("{:.1} min", ms / MINUTE_MS as f64))
            .unwrap_or_else(|| "none".into());
        s.push_str(&format!(
            "  {:<20} predicted {}/{}  mean lead time {}\n",
            l.fault_type, l.predicted, l.runs, mean
        ));
    }
    s
}

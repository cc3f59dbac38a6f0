use std::io::Write;
use std::path::Path;

use adaas_core::control::{ApplyReport, DesiredStateDocument, DetectorSpec};
use adaas_core::data_io::{SinkSpec, SourceSpec};
use adaas_core::experiment::{run_experiment, summary_text, ExperimentConfig};
use adaas_core::offline::{run_offline as offline, OfflineError};
use adaas_core::registry::{ParamMap, ParamType, Registry};
use serde_json::{json, Value};

use crate::render::{json_line, table, text};
use crate::{CliError, Client, OutputFormat};

fn read_local(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_report(report: &ApplyReport, fmt: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    match fmt {
        OutputFormat::Json => json_line(out, report)?,
        OutputFormat::Table if report.is_noop() => text(out, "no changes")?,
        OutputFormat::Table => {
            for id in &report.changeset.to_undeploy {
                text(out, &format!("undeployed {id}"))?;
            }
            for id in &report.changeset.to_deploy {
                text(out, &format!("deployed {id}"))?;
            }
            for f in report.failures() {
                let action = serde_json::to_value(f.action).unwrap_or(Value::Null);
                text(
                    out,
                    &format!(
                        "FAILED {} {}: {}",
                        action.as_str().unwrap_or("?"),
                        f.detector_id,
                        f.error.as_deref().unwrap_or("unknown error")
                    ),
                )?;
            }
        }
    }
    if report.is_success() {
        Ok(())
    } else {
        Err(CliError::Remote(format!(
            "{} change(s) failed",
            report.failures().count()
        )))
    }
}

pub fn apply(client: &Client, file: &Path, fmt: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    let doc: DesiredStateDocument = serde_json::from_str(&read_local(file)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    let report = client.apply(&doc)?;
    print_report(&report, fmt, out)
}

pub fn delete(client: &Client, id: &str, fmt: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    let report = client.delete(id)?;
    print_report(&report, fmt, out)
}

pub fn status(client: &Client, fmt: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    let entries = client.status()?;
    match fmt {
        OutputFormat::Json => entries.iter().try_for_each(|e| json_line(out, e)),
        OutputFormat::Table => {
            let rows: Vec<Vec<String>> = entries
                .iter()
                .map(|e| {
                    let state = match &e.state {
                        adaas_core::bridge::LifecycleState::Failed { reason } => {
                            format!("failed: {reason}")
                        }
                        s => s.label().to_owned(),
                    };
                    vec![
                        e.id().to_owned(),
                        e.spec.kpi.clone(),
                        e.spec.analysis_name.clone(),
                        if e.desired { state } else { format!("{state} (orphan)") },
                        e.samples_processed.to_string(),
                        e.anomalies_fired.to_string(),
                    ]
                })
                .collect();
            table(
                out,
                &["ID", "KPI", "ANALYSIS", "STATE", "SAMPLES", "ANOMALIES"],
                &rows,
            )
        }
    }
}

pub fn analyses(client: &Client, fmt: OutputFormat, out: &mut dyn Write) -> Result<(), CliError> {
    let list = client.analyses()?;
    match fmt {
        OutputFormat::Json => list.iter().try_for_each(|m| json_line(out, m)),
        OutputFormat::Table => {
            let rows: Vec<Vec<String>> = list
                .iter()
                .map(|m| {
                    let params: Vec<String> = m
                        .params
                        .iter()
                        .map(|p| {
                            let ty = match &p.ty {
                                ParamType::Integer => "int".to_owned(),
                                ParamType::Real => "real".to_owned(),
                                ParamType::Choice(c) => c.join("|"),
                            };
                            match &p.default {
                                Some(d) => format!("{}:{ty}={d}", p.name),
                                None => format!("{}:{ty}", p.name),
                            }
                        })
                        .collect();
                    vec![m.analysis_name.clone(), params.join(" "), m.description.clone()]
                })
                .collect();
            table(out, &["ANALYSIS", "PARAMS", "DESCRIPTION"], &rows)
        }
    }
}

/// `k=v` pairs; values that parse as JSON keep their type, others are strings.
pub fn parse_params(raw: &[String]) -> Result<ParamMap, CliError> {
    let mut map = ParamMap::new();
    for item in raw {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects K=V, got `{item}`")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_owned()));
        if map.insert(k.trim().to_owned(), value).is_some() {
            return Err(CliError::Usage(format!("parameter `{k}` given twice")));
        }
    }
    Ok(map)
}

pub fn run_offline(
    analysis: &str,
    params: &[String],
    input: &Path,
    kpi: &str,
    path: &Path,
    fmt: OutputFormat,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let raw = parse_params(params)?;
    let registry = Registry::with_builtins();
    let normalized = registry
        .resolve(analysis)
        .and_then(|m| m.validate_params(&raw))
        .map_err(|e| CliError::Remote(e.to_string()))?;
    let spec = DetectorSpec::new(
        kpi,
        analysis,
        normalized,
        SourceSpec::CsvFile {
            path: input.to_path_buf(),
        },
        SinkSpec::JsonLinesFile {
            path: path.to_path_buf(),
        },
    );
    let records = offline(&spec).map_err(|e| match e {
        OfflineError::Data(_) => CliError::Usage(e.to_string()),
        other => CliError::Remote(other.to_string()),
    })?;
    match fmt {
        OutputFormat::Json => json_line(
            out,
            &json!({ "detector_id": spec.detector_id, "anomalies": records.len(), "out": path }),
        ),
        OutputFormat::Table => text(
            out,
            &format!("{} anomalies written to {}", records.len(), path.display()),
        ),
    }
}

pub fn experiment(
    config: Option<&Path>,
    dir: &Path,
    fmt: OutputFormat,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg: ExperimentConfig = match config {
        Some(p) => toml::from_str(&read_local(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => ExperimentConfig::default(),
    };
    let result = run_experiment(&cfg, Some(dir)).map_err(|e| CliError::Remote(e.to_string()))?;
    match fmt {
        OutputFormat::Table => text(out, summary_text(&result).trim_end()),
        OutputFormat::Json => {
            let reference = result.reference().map(|c| {
                json!({
                    "window_minutes": c.window_minutes,
                    "past_minutes": c.past_minutes,
                    "precision": c.report.precision,
                    "recall": c.report.recall,
                    "predicted_failures": c.report.predicted_failures(),
                    "normal_false_rate": c.report.normal_false_rate,
                    "lead_times": c.report.lead_times,
                })
            });
            json_line(
                out,
                &json!({ "out": dir, "runs": result.runs.len(), "cells": result.cells.len(), "reference": reference }),
            )
        }
    }
}

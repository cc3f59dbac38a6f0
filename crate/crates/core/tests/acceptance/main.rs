//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../common/mod.rs"]
mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use adaas_core::bridge::{BridgeApi, BridgeConfig, LocalBridge};
use adaas_core::control::DetectorSpec;
use adaas_core::data_io::{read_csv_samples, Bus, SinkSpec, SourceSpec};
use adaas_core::detector::{AnalysisParams, SigmaLimitParams};
use adaas_core::experiment::{run_experiment, ExperimentConfig};
use adaas_core::offline::batch_records;
use adaas_core::registry::params_to_map;
use common::scenarios::{self, Outcome};

const SEED: u64 = 20_240_101;

fn golden_end_to_end() -> Outcome {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cpu_100.csv");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("anomalies.jsonl");
    let params = AnalysisParams::SigmaLimit(SigmaLimitParams::new(10, 3.0).unwrap());
    let spec = DetectorSpec::new(
        "cpu",
        "sigma_limit",
        params_to_map(&params),
        SourceSpec::CsvFile {
            path: fixture.clone(),
        },
        SinkSpec::JsonLinesFile { path: out.clone() },
    );
    let id = spec.detector_id.clone();
    let bridge = LocalBridge::new(Arc::new(Bus::new()), BridgeConfig::default());
    bridge.deploy(spec).map_err(|e| e.to_string())?;
    let snap = bridge
        .wait_for(&id, Duration::from_secs(4), |i| i.source_exhausted)
        .map_err(|e| e.to_string())?;
    if !snap.source_exhausted {
        return Err(format!("source not drained: {snap:?}"));
    }
    bridge.undeploy(&id).map_err(|e| e.to_string())?;

    let samples = read_csv_samples(&fixture, Some("cpu")).map_err(|e| e.to_string())?;
    let expected: String = batch_records(&id, &params, &samples)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| r.to_json_line() + "\n")
        .collect();
    let written = std::fs::read(&out).map_err(|e| e.to_string())?;
    if written != expected.as_bytes() {
        return Err("anomaly file differs from batch serialization".into());
    }
    Ok(format!(
        "{} bytes, {} anomalies, byte-identical",
        written.len(),
        expected.lines().count()
    ))
}

fn desk_experiment() -> Outcome {
    let cfg = ExperimentConfig {
        emit_runs: false,
        ..Default::default()
    };
    let res = run_experiment(&cfg, None).map_err(|e| e.to_string())?;
    let cell = res
        .reference()
        .ok_or("reference cell W=20/past=10 missing")?;
    let r = &cell.report;
    let failing = r.failing_runs().count();
    let predicted = r.predicted_failures();
    let mut problems = Vec::new();
    if failing != 12 || predicted < 10 {
        problems.push(format!("(a) {predicted}/{failing} failing runs predicted"));
    }
    let false_rate = r.normal_false_rate.unwrap_or(f64::NAN);
    if false_rate.is_nan() || false_rate > 0.02 {
        problems.push(format!("(b) normal false-stable rate {false_rate:.4}"));
    }
    if r.lead_times.len() != 4 {
        problems.push(format!("(c) {} fault types reported", r.lead_times.len()));
    }
    for lt in &r.lead_times {
        if !lt.mean_lead_time_ms.is_some_and(|m| m > 0.0) {
            problems.push(format!("(c) {} has no positive mean lead time", lt.fault_type));
        }
    }
    let mut axes: Vec<(u32, u32)> = res
        .cells
        .iter()
        .map(|c| (c.window_minutes, c.past_minutes))
        .collect();
    axes.sort();
    let want: Vec<(u32, u32)> = [15, 20, 25]
        .iter()
        .flat_map(|&w| [10, 20, 50, 100].map(|p| (w, p)))
        .collect();
    if axes != want {
        problems.push(format!("(d) grid cells {axes:?}"));
    }
    let leads: Vec<String> = r
        .lead_times
        .iter()
        .map(|l| {
            format!(
                "{}={:.1}min",
                l.fault_type,
                l.mean_lead_time_ms.unwrap_or(f64::NAN) / 60_000.0
            )
        })
        .collect();
    let summary = format!(
        "{predicted}/{failing} predicted, normal false-stable {:.2}%, lead {}, {} cells",
        false_rate * 100.0,
        leads.join(" "),
        res.cells.len()
    );
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", problems.join("; ")))
    }
}

struct Criterion {
    number: u32,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            number: 1,
            name: "detector oracle equivalence",
            limit: Duration::from_secs(10),
            check: || scenarios::oracle_equivalence(1000, SEED),
        },
        Criterion {
            number: 2,
            name: "batch/stream equivalence and invariance laws",
            limit: Duration::from_secs(30),
            check: || scenarios::stream_and_invariance_laws(1000, SEED + 1),
        },
        Criterion {
            number: 3,
            name: "reconciliation fixpoint and idempotence",
            limit: Duration::from_secs(10),
            check: || scenarios::reconciliation_fixpoint(5, 100, SEED + 2),
        },
        Criterion {
            number: 4,
            name: "end-to-end golden file",
            limit: Duration::from_secs(5),
            check: golden_end_to_end,
        },
        Criterion {
            number: 5,
            name: "one-class SVM nu-property",
            limit: Duration::from_secs(60),
            check: || scenarios::nu_property(50, SEED + 4),
        },
        Criterion {
            number: 6,
            name: "desk-scale failure prediction",
            limit: Duration::from_secs(300),
            check: desk_experiment,
        },
        Criterion {
            number: 7,
            name: "stability filter exhaustive check",
            limit: Duration::from_secs(5),
            check: || scenarios::stability_exhaustive(16, 8),
        },
        Criterion {
            number: 8,
            name: "lifecycle robustness",
            limit: Duration::from_secs(30),
            check: || {
                scenarios::kill_one_worker(Duration::from_millis(250), Duration::from_millis(100))
            },
        },
    ];

    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.number))
    {
        let start = Instant::now();
        let outcome = (c.check)();
        let took = start.elapsed();
        let (verdict, detail) = match outcome {
            Ok(d) if took <= c.limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("took {took:.2?} > {:?}; {d}", c.limit)),
            Err(e) => ("FAIL", e),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {}: {verdict} {} [{took:.2?}] {detail}",
            c.number, c.name
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every exported function takes plain values and returns a JSON string.
//! The `*_json` functions hold the logic and are usable from native code.

use adaas_core::detector::{detect_batch, Sample};
use adaas_core::prediction::{stability_filter, stable_mask, StableRun};
use adaas_core::registry::{typed_params, ParamMap, Registry};
use adaas_core::sim::{
    generate_normal_run, inject_fault, ActivationPattern, FaultSpec, FaultType, WorkloadProfile,
    DAY_MS, MINUTE_MS, SIM_START_MS,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
struct Firing {
    index: usize,
    observed: f64,
    threshold: f64,
    score: f64,
}

#[derive(Debug, Serialize)]
struct DetectOutput {
    analysis: String,
    params: ParamMap,
    warm_up: usize,
    fired: Vec<Firing>,
}

/// Run one analysis over `values` (one sample per minute).
pub fn detect_json(analysis: &str, params_json: &str, values: &[f64]) -> Result<String, String> {
    let raw: ParamMap = if params_json.trim().is_empty() {
        ParamMap::new()
    } else {
        serde_json::from_str(params_json).map_err(|e| format!("params: {e}"))?
    };
    let registry = Registry::with_builtins();
    let meta = registry.resolve(analysis).map_err(|e| e.to_string())?;
    let params = meta.validate_params(&raw).map_err(|e| e.to_string())?;
    let typed = typed_params(analysis, &params).map_err(|e| e.to_string())?;
    let samples: Vec<Sample> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| Sample::new(i as i64 * MINUTE_MS, "series", v))
        .collect();
    let fired = detect_batch(&typed, &samples)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(index, v)| Firing {
            index,
            observed: v.observed,
            threshold: v.threshold_used,
            score: v.score,
        })
        .collect();
    to_json(&DetectOutput {
        analysis: analysis.to_owned(),
        params,
        warm_up: typed.warm_up(),
        fired,
    })
}

#[derive(Debug, Serialize)]
struct SimOutput {
    start_ms: i64,
    step_ms: i64,
    kpis: Vec<String>,
    values: Vec<Vec<f64>>,
    fault_start_index: Option<usize>,
    failure_index: Option<usize>,
    activations: usize,
}

/// Hours of simulated time before the fault starts.
const LEAD_IN_HOURS: i64 = 4;

/// Simulate `hours` of a Tuesday from 06:00, optionally with a fault starting at 10:00.
///
/// `fault` is `none` or a fault type name; `pattern` is `constant`,
/// `exponential` or `random`.
pub fn simulate_json(fault: &str, pattern: &str, hours: u32, seed: u64) -> Result<String, String> {
    if !(5..=72).contains(&hours) {
        return Err("hours must be between 5 and 72".into());
    }
    let start = SIM_START_MS + DAY_MS + 6 * 60 * MINUTE_MS;
    let profile = WorkloadProfile::default();
    let normal = generate_normal_run(&profile, start, hours as usize * 60, seed)
        .map_err(|e| e.to_string())?;
    let run = if fault == "none" {
        normal
    } else {
        let fault_type = FaultType::ALL
            .into_iter()
            .find(|f| f.name() == fault)
            .ok_or_else(|| format!("unknown fault `{fault}`"))?;
        let activation = match pattern {
            "constant" => ActivationPattern::Constant { rate_per_hour: 6.0 },
            "exponential" => ActivationPattern::Exponential {
                rate_per_hour: 6.0,
                doubling_minutes: 60.0,
            },
            "random" => ActivationPattern::Random {
                rate_per_hour: 6.0,
                seed,
            },
            other => return Err(format!("unknown activation pattern `{other}`")),
        };
        let spec = FaultSpec::new(
            fault_type,
            activation,
            start + LEAD_IN_HOURS * 60 * MINUTE_MS,
        );
        inject_fault(&normal, &spec).map_err(|e| e.to_string())?
    };
    let index = |ts: i64| ((ts - run.start_ms) / MINUTE_MS) as usize;
    to_json(&SimOutput {
        start_ms: run.start_ms,
        step_ms: MINUTE_MS,
        kpis: run.kpi_names(),
        fault_start_index: run.fault.as_ref().map(|f| index(f.start_ms)),
        failure_index: run.failure_time_ms.map(index),
        activations: run.activations_ms.len(),
        values: run.values,
    })
}

#[derive(Debug, Serialize)]
struct StabilityOutput {
    k: usize,
    mask: Vec<bool>,
    runs: Vec<StableRun>,
}

/// Apply the k-consecutive stability rule to a 0/1 flag sequence.
pub fn stability_json(flags: &[u8], k: usize) -> Result<String, String> {
    if k == 0 {
        return Err("k must be at least 1".into());
    }
    let raw: Vec<bool> = flags.iter().map(|&f| f != 0).collect();
    to_json(&StabilityOutput {
        k,
        mask: stable_mask(&raw, k),
        runs: stability_filter(&raw, k),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn detect(analysis: &str, params_json: &str, values: &[f64]) -> Result<String, JsError> {
    detect_json(analysis, params_json, values).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(fault: &str, pattern: &str, hours: u32, seed: u32) -> Result<String, JsError> {
    simulate_json(fault, pattern, hours, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stability(flags: &[u8], k: usize) -> Result<String, JsError> {
    stability_json(flags, k).map_err(|e| JsError::new(&e))
}

/// Names of the available analyses, as a JSON array of registry entries.
#[wasm_bindgen]
pub fn analyses() -> String {
    serde_json::to_string(&Registry::with_builtins().list()).unwrap_or_else(|_| "[]".into())
}

//! Randomized checks shared by the integration tests and the acceptance run.
//! Each returns a short summary on success and a description of the first
//! counterexample on failure.

use std::sync::Arc;
use std::time::{Duration, Instant};

use adaas_core::bridge::{BridgeApi, BridgeConfig, LifecycleState, LocalBridge, MemoryBridge};
use adaas_core::control::{
    compute_changeset, ControlConfig, ControlServer, DesiredState, DetectorSpec,
};
use adaas_core::data_io::{read_anomalies, Bus, BusMessage, SinkSpec, SourceSpec};
use adaas_core::detector::{detect_batch, AnalysisParams, Detector, LambdaMode, SigmaLimitParams};
use adaas_core::offline::batch_records;
use adaas_core::prediction::{stability_filter, stable_mask, OcSvmModel, OcSvmParams, StableRun};
use adaas_core::registry::{params_to_map, Registry};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::gen::{self, KINDS};
use super::oracle;

pub type Outcome = Result<String, String>;

fn fired_indices(params: &AnalysisParams, values: &[f64]) -> Vec<usize> {
    detect_batch(params, &gen::samples(values))
        .expect("generated series are valid")
        .into_iter()
        .map(|(i, _)| i)
        .collect()
}

fn oracle_indices(params: &AnalysisParams, values: &[f64]) -> Vec<usize> {
    match *params {
        AnalysisParams::FixedThreshold(p) => oracle::fixed_threshold(values, p.threshold, p.run_length),
        AnalysisParams::SigmaLimit(p) => oracle::sigma_limit(values, p.window_size, p.sigma),
        AnalysisParams::MeanShift(p) => oracle::mean_shift(values, p.window_size, p.lambda),
    }
}

/// `detect_batch` against the brute-force oracle, `cases` per detector kind.
pub fn oracle_equivalence(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fired = 0usize;
    for kind in KINDS {
        for case in 0..cases {
            let values = gen::series(&mut rng, 500);
            let params = gen::params(&mut rng, kind, &values);
            let got = fired_indices(&params, &values);
            let want = oracle_indices(&params, &values);
            if got != want {
                return Err(format!(
                    "{kind:?} case {case}: {params:?} on {} samples: got {got:?}, oracle {want:?}",
                    values.len()
                ));
            }
            fired += got.len();
        }
    }
    Ok(format!("{} cases, {fired} firings matched", 3 * cases))
}

/// Per-index distance of the decision statistic from its threshold, `None` during warm-up.
fn margins(params: &AnalysisParams, values: &[f64]) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| match *params {
            AnalysisParams::FixedThreshold(p) => (i + 1 >= p.run_length).then(|| {
                values[i + 1 - p.run_length..=i]
                    .iter()
                    .map(|x| (x - p.threshold).abs())
                    .fold(f64::INFINITY, f64::min)
            }),
            AnalysisParams::SigmaLimit(p) => (i >= p.window_size).then(|| {
                let (m, s) = oracle::stats(&values[i - p.window_size..i]);
                ((values[i] - m).abs() - p.sigma * s).abs()
            }),
            AnalysisParams::MeanShift(p) => (i + 1 >= 2 * p.window_size).then(|| {
                let d = p.window_size;
                let (mp, sp) = oracle::stats(&values[i + 1 - 2 * d..i + 1 - d]);
                let (mc, _) = oracle::stats(&values[i + 1 - d..=i]);
                let l = match p.lambda {
                    LambdaMode::Fixed(l) => l,
                    LambdaMode::PrevWindowStd => sp,
                };
                ((mp - mc).abs() - l).abs()
            }),
        })
        .collect()
}

fn translated(params: &AnalysisParams, c: f64) -> AnalysisParams {
    match *params {
        AnalysisParams::FixedThreshold(mut p) => {
            p.threshold += c;
            AnalysisParams::FixedThreshold(p)
        }
        other => other,
    }
}

fn scaled(params: &AnalysisParams, a: f64) -> AnalysisParams {
    match *params {
        AnalysisParams::FixedThreshold(mut p) => {
            p.threshold *= a;
            AnalysisParams::FixedThreshold(p)
        }
        AnalysisParams::MeanShift(mut p) => {
            if let LambdaMode::Fixed(l) = p.lambda {
                p.lambda = LambdaMode::Fixed(l * a);
            }
            AnalysisParams::MeanShift(p)
        }
        other => other,
    }
}

/// Fired indices must agree wherever the original decision is clear of rounding.
fn agree_with_margin(
    what: &str,
    params: &AnalysisParams,
    values: &[f64],
    other: &[usize],
    tol: f64,
) -> Result<usize, String> {
    let base = fired_indices(params, values);
    let margins = margins(params, values);
    let mut checked = 0;
    for (i, m) in margins.iter().enumerate() {
        let Some(m) = m else { continue };
        if *m <= tol {
            continue;
        }
        checked += 1;
        if base.binary_search(&i).is_ok() != other.binary_search(&i).is_ok() {
            return Err(format!("{what}: {params:?} disagrees at index {i} (margin {m})"));
        }
    }
    Ok(checked)
}

/// Streaming equals batch, and the translation, scaling, constant-silence and
/// warm-up laws hold, `cases` random cases per law.
pub fn stream_and_invariance_laws(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decisions = 0usize;
    for case in 0..cases {
        let kind = KINDS[case % 3];
        let values = gen::series(&mut rng, 500);
        let params = gen::params(&mut rng, kind, &values);
        let samples = gen::samples(&values);

        // batch vs stream, with the stream resumed from a cloned detector mid-way
        let batch = detect_batch(&params, &samples).unwrap();
        let mut det = Detector::new(params).unwrap();
        let cut = rng.random_range(0..=samples.len());
        let mut streamed = Vec::new();
        for (i, s) in samples[..cut].iter().enumerate() {
            let v = det.step(s).unwrap();
            if v.fired {
                streamed.push((i, v));
            }
        }
        let mut resumed = det.clone();
        for (i, s) in samples.iter().enumerate().skip(cut) {
            let v = resumed.step(s).unwrap();
            if v.fired {
                streamed.push((i, v));
            }
        }
        if streamed != batch {
            return Err(format!("stream/batch differ for {params:?} (case {case}, cut {cut})"));
        }

        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        // translation
        let c: f64 = rng.random_range(-1000.0..1000.0);
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let tol = 1e-8 * (max_abs + c.abs() + 1.0);
        decisions += agree_with_margin(
            "translation",
            &params,
            &values,
            &fired_indices(&translated(&params, c), &shifted),
            tol,
        )?;

        // positive scaling
        let a: f64 = if rng.random_bool(0.5) {
            2f64.powi(rng.random_range(-6..=6))
        } else {
            rng.random_range(0.01..100.0)
        };
        let stretched: Vec<f64> = values.iter().map(|v| v * a).collect();
        let scaled_fired = fired_indices(&scaled(&params, a), &stretched);
        if a.log2().fract() == 0.0 {
            // power-of-two scaling is exact in binary floating point
            if scaled_fired != fired_indices(&params, &values) {
                return Err(format!("exact scaling by {a} changed {params:?}"));
            }
        }
        decisions += agree_with_margin(
            "scaling",
            &params,
            &values,
            &scaled_fired,
            1e-8 * (max_abs + 1.0),
        )?;

        // constant series
        let level: f64 = rng.random_range(-1e6..1e6);
        let constant = vec![level; values.len()];
        let silent_params = match params {
            AnalysisParams::FixedThreshold(mut p) => {
                p.threshold = level + rng.random_range(1e-3..10.0);
                AnalysisParams::FixedThreshold(p)
            }
            other => other,
        };
        if !fired_indices(&silent_params, &constant).is_empty() {
            return Err(format!("{silent_params:?} fired on constant {level}"));
        }

        // warm-up
        let warm = params.warm_up();
        if let Some(&first) = fired_indices(&params, &values).first() {
            if first < warm {
                return Err(format!("{params:?} fired at {first}, warm-up is {warm}"));
            }
        }
        let primed = warm_up_witness(&params);
        if fired_indices(&params, &primed).first() != Some(&warm) {
            return Err(format!("{params:?} did not fire right after warm-up"));
        }
    }
    Ok(format!("{cases} cases per law, {decisions} margin-checked decisions"))
}

/// A series that fires exactly at the first index after warm-up.
fn warm_up_witness(params: &AnalysisParams) -> Vec<f64> {
    match *params {
        AnalysisParams::FixedThreshold(p) => vec![p.threshold; p.run_length],
        AnalysisParams::SigmaLimit(p) => {
            let mut v = vec![0.0; p.window_size];
            v.push(1.0);
            v
        }
        AnalysisParams::MeanShift(p) => {
            let jump = match p.lambda {
                LambdaMode::Fixed(l) => l + 1.0,
                LambdaMode::PrevWindowStd => 1.0,
            };
            let mut v = vec![0.0; p.window_size];
            v.extend(std::iter::repeat_n(jump, p.window_size));
            v
        }
    }
}

/// Brute-force window scan: every position whose trailing `k` values are all true,
/// and the prediction runs derived from them.
fn stability_oracle(raw: &[bool], k: usize) -> (Vec<bool>, Vec<StableRun>) {
    let mask: Vec<bool> = (0..raw.len())
        .map(|t| t + 1 >= k && (t + 1 - k..=t).all(|j| raw[j]))
        .collect();
    let mut runs = Vec::new();
    for t in 0..raw.len() {
        if mask[t] && (t == 0 || !mask[t - 1]) {
            let start = t + 1 - k;
            let len = raw[start..].iter().take_while(|&&r| r).count();
            runs.push(StableRun {
                trigger: t,
                start,
                len,
            });
        }
    }
    (mask, runs)
}

/// Every boolean sequence of length `0..=max_len` and every `k` in `1..=max_k`.
pub fn stability_exhaustive(max_len: usize, max_k: usize) -> Outcome {
    let mut checked = 0u64;
    for len in 0..=max_len {
        for bits in 0u32..(1u32 << len) {
            let raw: Vec<bool> = (0..len).map(|i| bits >> i & 1 == 1).collect();
            for k in 1..=max_k {
                let (mask, runs) = stability_oracle(&raw, k);
                if stable_mask(&raw, k) != mask || stability_filter(&raw, k) != runs {
                    return Err(format!("mismatch for k={k} on {raw:?}"));
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (sequence, k) pairs"))
}

fn pool() -> Vec<DetectorSpec> {
    let registry = Registry::with_builtins();
    let mut specs = Vec::new();
    for kpi in ["cpu", "mem", "disk", "net", "errors", "latency"] {
        for (name, raw) in [
            ("sigma_limit", serde_json::json!({"window_size": 10})),
            ("sigma_limit", serde_json::json!({"window_size": 30, "sigma": 2.5})),
            ("mean_shift", serde_json::json!({"window_size": 5})),
            ("fixed_threshold", serde_json::json!({"threshold": 90.0, "run_length": 3})),
        ] {
            let params = registry
                .resolve(name)
                .unwrap()
                .validate_params(&serde_json::from_value(raw).unwrap())
                .unwrap();
            specs.push(DetectorSpec::new(
                kpi,
                name,
                params,
                SourceSpec::Bus { topic: "metrics".into() },
                SinkSpec::Bus { topic: "anomalies".into() },
            ));
        }
    }
    specs
}

/// Random sequences of desired states applied through a control server: each
/// apply reaches a fixpoint and an identical re-apply mutates nothing.
pub fn reconciliation_fixpoint(sequences: usize, applies: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = pool();
    let mut deploys = 0;
    for seq in 0..sequences {
        let bridge = Arc::new(MemoryBridge::new());
        let server = ControlServer::start(
            ControlConfig {
                status_poll_interval: Duration::from_secs(60),
                ..Default::default()
            },
            Arc::new(Registry::with_builtins()),
            bridge.clone(),
        )
        .map_err(|e| e.to_string())?;
        for step in 0..applies {
            let n = rng.random_range(0..=pool.len());
            let chosen: Vec<DetectorSpec> = pool.choose_multiple(&mut rng, n).cloned().collect();
            let desired = DesiredState::from_specs(chosen).map_err(|e| e.to_string())?;
            let report = server
                .apply_desired_state(desired.clone())
                .map_err(|e| e.to_string())?;
            if !report.is_success() {
                return Err(format!("sequence {seq} step {step}: apply failed: {report:?}"));
            }
            let actual: Vec<DetectorSpec> = bridge
                .list_instances()
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|i| i.spec)
                .collect();
            let residual = compute_changeset(&desired, &actual);
            if !residual.is_empty() {
                return Err(format!("sequence {seq} step {step}: no fixpoint: {residual:?}"));
            }
            let before = bridge.counts().mutations();
            let again = server.apply_desired_state(desired).map_err(|e| e.to_string())?;
            if !again.is_noop() || bridge.counts().mutations() != before {
                return Err(format!("sequence {seq} step {step}: re-apply touched the bridge"));
            }
        }
        deploys += bridge.counts().deploys;
    }
    Ok(format!(
        "{sequences}x{applies} applies, {deploys} deploys, all re-applies idle"
    ))
}

/// The training-set novel fraction and support-vector fraction bracket ν.
pub fn nu_property(sets: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_novel = f64::NEG_INFINITY;
    let mut worst_sv = f64::NEG_INFINITY;
    for set in 0..sets {
        let nu = [0.05, 0.1, 0.2, 0.3, 0.5][set % 5];
        let scales: Vec<f64> = (0..10).map(|_| rng.random_range(0.1..10.0)).collect();
        let clusters = rng.random_range(1..=3);
        let centers: Vec<Vec<f64>> = (0..clusters)
            .map(|_| (0..10).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let unit = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let c = &centers[rng.random_range(0..clusters)];
                (0..10)
                    .map(|d| (c[d] + unit.sample(&mut rng)) * scales[d])
                    .collect()
            })
            .collect();
        let params = OcSvmParams {
            nu,
            ..Default::default()
        };
        let model = OcSvmModel::fit(&data, &params).map_err(|e| e.to_string())?;
        let novel = data.iter().filter(|x| model.is_novel(x)).count() as f64 / 100.0;
        let sv = model.summary.support_vectors as f64 / 100.0;
        if novel > nu + 0.05 {
            return Err(format!("set {set}: novel fraction {novel} > nu {nu} + 0.05"));
        }
        if sv < nu - 0.05 {
            return Err(format!("set {set}: support fraction {sv} < nu {nu} - 0.05"));
        }
        worst_novel = worst_novel.max(novel - nu);
        worst_sv = worst_sv.max(nu - sv);
    }
    Ok(format!(
        "{sets} sets; max(novel-nu)={worst_novel:+.3}, max(nu-sv)={worst_sv:+.3}"
    ))
}

/// Three bus-fed detectors; one is crashed mid-stream. The others keep
/// running with batch-identical output and the crash shows up in status
/// within one poll interval (plus `slack`).
pub fn kill_one_worker(poll: Duration, slack: Duration) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bus = Arc::new(Bus::new());
    let bridge = Arc::new(LocalBridge::new(bus.clone(), BridgeConfig::default()));
    let server = ControlServer::start(
        ControlConfig {
            status_poll_interval: poll,
            ..Default::default()
        },
        Arc::new(Registry::with_builtins()),
        bridge.clone(),
    )
    .map_err(|e| e.to_string())?;

    let params = AnalysisParams::SigmaLimit(SigmaLimitParams::new(12, 3.0).unwrap());
    let kpis = ["cpu", "mem", "net"];
    let specs: Vec<DetectorSpec> = kpis
        .iter()
        .map(|k| {
            DetectorSpec::new(
                *k,
                "sigma_limit",
                params_to_map(&params),
                SourceSpec::Bus { topic: "metrics".into() },
                SinkSpec::JsonLinesFile {
                    path: dir.path().join(format!("{k}.jsonl")),
                },
            )
        })
        .collect();
    let report = server
        .apply_desired_state(DesiredState::from_specs(specs.clone()).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    if !report.is_success() {
        return Err(format!("deploy failed: {report:?}"));
    }
    if !super::wait_until(Duration::from_secs(5), || bus.subscriber_count("metrics") == 3) {
        return Err("workers never subscribed".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let series: Vec<Vec<f64>> = kpis
        .iter()
        .map(|_| {
            (0..400)
                .map(|i| {
                    let x: f64 = rng.random_range(0.0..1.0);
                    if i % 53 == 52 { 25.0 } else { x }
                })
                .collect()
        })
        .collect();
    let publish = |range: std::ops::Range<usize>| {
        for i in range {
            for (k, kpi) in kpis.iter().enumerate() {
                let ts = gen::T0 + i as i64 * 60_000;
                bus.publish(
                    "metrics",
                    BusMessage::Sample(adaas_core::Sample::new(ts, *kpi, series[k][i])),
                );
            }
        }
    };
    let processed = |id: &str| bridge.status(id).map(|i| i.samples_processed).unwrap_or(0);

    publish(0..200);
    let ids: Vec<&str> = specs.iter().map(|s| s.detector_id.as_str()).collect();
    if !super::wait_until(Duration::from_secs(5), || ids.iter().all(|id| processed(id) == 200)) {
        return Err("first half not processed".into());
    }
    let victim = ids[1];
    bridge.inject_crash(victim).map_err(|e| e.to_string())?;
    let crashed_at = Instant::now();
    if !super::wait_until(Duration::from_secs(2), || {
        matches!(bridge.status(victim).map(|i| i.state), Ok(LifecycleState::Failed { .. }))
    }) {
        return Err("crash did not fail the worker".into());
    }
    let failed_in_status = || {
        server
            .get_deployment_status()
            .iter()
            .any(|e| e.id() == victim && matches!(e.state, LifecycleState::Failed { .. }))
    };
    if !super::wait_until(poll + slack, failed_in_status) {
        return Err(format!("Failed not visible in status within {:?}", poll + slack));
    }
    let visible_after = crashed_at.elapsed();

    publish(200..400);
    let survivors = [ids[0], ids[2]];
    if !super::wait_until(Duration::from_secs(5), || {
        survivors.iter().all(|id| processed(id) == 400)
    }) {
        return Err("survivors stalled after the crash".into());
    }
    std::thread::sleep(poll + slack);
    let status = server.get_deployment_status();
    for id in survivors {
        let entry = status
            .iter()
            .find(|e| e.id() == id)
            .ok_or_else(|| format!("{id} missing from status"))?;
        if entry.state != LifecycleState::Running {
            return Err(format!("{id} is {:?}", entry.state));
        }
    }
    server.shutdown();
    drop(server);
    for id in survivors {
        bridge.undeploy(id).map_err(|e| e.to_string())?;
    }
    for (k, spec) in specs.iter().enumerate() {
        if spec.detector_id == victim {
            continue;
        }
        let samples: Vec<_> = (0..400)
            .map(|i| adaas_core::Sample::new(gen::T0 + i as i64 * 60_000, kpis[k], series[k][i]))
            .collect();
        let want = batch_records(&spec.detector_id, &params, &samples).map_err(|e| e.to_string())?;
        let SinkSpec::JsonLinesFile { path } = &spec.sink else { unreachable!() };
        let got = read_anomalies(path).map_err(|e| e.to_string())?;
        if got != want || want.is_empty() {
            return Err(format!("{} output differs from batch ({} vs {})", kpis[k], got.len(), want.len()));
        }
    }
    Ok(format!(
        "2 survivors matched batch output; Failed visible after {visible_after:?} (poll {poll:?})"
    ))
}

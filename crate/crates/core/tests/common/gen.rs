//! Seeded generators for randomized detector cases.

use adaas_core::detector::{
    AnalysisParams, FixedThresholdParams, LambdaMode, MeanShiftParams, Sample, SigmaLimitParams,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const T0: i64 = 1_704_067_200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    FixedThreshold,
    SigmaLimit,
    MeanShift,
}

pub const KINDS: [Kind; 3] = [Kind::FixedThreshold, Kind::SigmaLimit, Kind::MeanShift];

/// A series mixing noise, plateaus, ties and spikes, up to `max_len` long.
pub fn series(rng: &mut impl Rng, max_len: usize) -> Vec<f64> {
    let len = rng.random_range(0..=max_len);
    let base: f64 = rng.random_range(-100.0..100.0);
    let spread: f64 = rng.random_range(0.01..20.0);
    let noise = Normal::new(0.0, spread).unwrap();
    let mode = rng.random_range(0..4);
    let mut level = base;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let v = match mode {
            // continuous noise
            0 => base + noise.sample(rng),
            // small integers, lots of ties
            1 => (base.round() + rng.random_range(-3..=3) as f64) * 0.25,
            // plateaus with level changes
            2 => {
                if rng.random_bool(0.05) {
                    level = base + noise.sample(rng) * 3.0;
                }
                level
            }
            // noise with rare spikes
            _ => {
                let x = base + noise.sample(rng);
                if rng.random_bool(0.03) {
                    x + spread * rng.random_range(5.0..20.0)
                } else {
                    x
                }
            }
        };
        out.push(v);
    }
    out
}

pub fn params(rng: &mut impl Rng, kind: Kind, values: &[f64]) -> AnalysisParams {
    match kind {
        Kind::FixedThreshold => {
            // pick thresholds inside the data range so both outcomes occur
            let threshold = if values.is_empty() || rng.random_bool(0.1) {
                rng.random_range(-100.0..100.0)
            } else {
                values[rng.random_range(0..values.len())]
            };
            AnalysisParams::FixedThreshold(
                FixedThresholdParams::new(threshold, rng.random_range(1..=8)).unwrap(),
            )
        }
        Kind::SigmaLimit => AnalysisParams::SigmaLimit(
            SigmaLimitParams::new(rng.random_range(2..=40), rng.random_range(0.25..4.0)).unwrap(),
        ),
        Kind::MeanShift => {
            let lambda = if rng.random_bool(0.5) {
                LambdaMode::PrevWindowStd
            } else {
                LambdaMode::Fixed(rng.random_range(0.0..5.0))
            };
            AnalysisParams::MeanShift(
                MeanShiftParams::new(rng.random_range(1..=30), lambda).unwrap(),
            )
        }
    }
}

pub fn samples(values: &[f64]) -> Vec<Sample> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| Sample::new(T0 + i as i64 * 60_000, "kpi", v))
        .collect()
}

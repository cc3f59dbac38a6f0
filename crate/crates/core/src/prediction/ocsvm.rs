//! ν one-class SVM with an RBF kernel.
//!
//! The dual is solved in the scaling used by libsvm:
//!
//! ```text
//! min ½ αᵀQα   s.t.  0 ≤ αᵢ ≤ wᵢ,  Σαᵢ = ν·Σwᵢ
//! ```
//!
//! where `wᵢ` is the multiplicity of a deduplicated training point. Each step
//! updates the maximal violating pair until the KKT gap drops below the
//! tolerance.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::PredictionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcSvmParams {
    pub nu: f64,
    /// RBF width; `None` means 1 / dimension.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Cap on distinct training points; larger sets are thinned deterministically.
    pub max_points: usize,
}

impl Default for OcSvmParams {
    fn default() -> Self {
        Self {
            nu: 0.05,
            gamma: None,
            tolerance: 1e-3,
            max_iterations: 10_000_000,
            max_points: 4000,
        }
    }
}

/// Per-dimension z-scoring with training statistics. Dimensions with zero
/// training variance are centered but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &[Vec<f64>]) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let n = points.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for p in points {
            for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation.
    pub gap: f64,
}

/// Solve the weighted ν one-class dual for a precomputed row-major kernel matrix.
pub fn solve_dual(
    kernel: &[f64],
    weights: &[f64],
    nu: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<DualSolution, PredictionError> {
    let n = weights.len();
    assert_eq!(kernel.len(), n * n, "kernel must be n×n");
    if n == 0 {
        return Err(PredictionError::EmptyTraining);
    }
    let k = |i: usize, j: usize| kernel[i * n + j];

    let mut remaining = nu * weights.iter().sum::<f64>();
    let mut alpha: Vec<f64> = weights
        .iter()
        .map(|&w| {
            let a = w.min(remaining);
            remaining -= a;
            a
        })
        .collect();
    let mut grad = vec![0.0; n];
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += a * k(i, j);
            }
        }
    }

    let mut iterations = 0;
    let gap = loop {
        let mut up: Option<(usize, f64)> = None;
        let mut low: Option<(usize, f64)> = None;
        for i in 0..n {
            if alpha[i] < weights[i] && up.is_none_or(|(_, g)| grad[i] < g) {
                up = Some((i, grad[i]));
            }
            if alpha[i] > 0.0 && low.is_none_or(|(_, g)| grad[i] > g) {
                low = Some((i, grad[i]));
            }
        }
        let (Some((i, gi)), Some((j, gj))) = (up, low) else {
            break 0.0;
        };
        let gap = gj - gi;
        if gap < tolerance {
            break gap.max(0.0);
        }
        if iterations >= max_iterations {
            return Err(PredictionError::NonConvergence {
                iterations,
                residual: gap,
            });
        }
        iterations += 1;

        let quad = (k(i, i) + k(j, j) - 2.0 * k(i, j)).max(1e-12);
        let room_i = weights[i] - alpha[i];
        let room_j = alpha[j];
        let mut delta = gap / quad;
        if delta >= room_i {
            delta = room_i;
        }
        if delta >= room_j {
            delta = room_j;
        }
        alpha[i] = if delta == room_i { weights[i] } else { alpha[i] + delta };
        alpha[j] = if delta == room_j { 0.0 } else { alpha[j] - delta };
        for (t, g) in grad.iter_mut().enumerate() {
            *g += delta * (k(t, i) - k(t, j));
        }
    };

    Ok(DualSolution {
        rho: compute_rho(&alpha, weights, &grad),
        alpha,
        iterations,
        gap,
    })
}

/// Offset from the KKT conditions: the mean gradient over free variables, or
/// the midpoint of the feasible interval when none are free.
fn compute_rho(alpha: &[f64], weights: &[f64], grad: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for ((&a, &w), &g) in alpha.iter().zip(weights).zip(grad) {
        if a >= w {
            lb = lb.max(g);
        } else if a <= 0.0 {
            ub = ub.min(g);
        } else {
            free += 1;
            sum += g;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSummary {
    pub nu: f64,
    pub gamma: f64,
    pub training_points: usize,
    pub distinct_points: usize,
    pub used_points: usize,
    pub support_vectors: usize,
    pub iterations: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub scaler: Standardizer,
    pub support: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    /// Decisions in `[-boundary, 0)` lie within solver tolerance of the
    /// boundary, where the free support vectors sit, and count as normal.
    #[serde(default)]
    pub boundary: f64,
    pub summary: SvmSummary,
}

impl OcSvmModel {
    pub fn fit(train: &[Vec<f64>], params: &OcSvmParams) -> Result<Self, PredictionError> {
        let dim = super::check_dims(train)?;
        let gamma = params.gamma.unwrap_or(1.0 / dim.max(1) as f64);
        if !(params.nu > 0.0 && params.nu <= 1.0) {
            return Err(PredictionError::InvalidParams(format!(
                "nu must be in (0, 1], got {}",
                params.nu
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(PredictionError::InvalidParams(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        let scaler = Standardizer::fit(train);

        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut points: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for x in train {
            let z = scaler.transform(x);
            let key: Vec<u64> = z.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&i) => weights[i] += 1.0,
                None => {
                    index.insert(key, points.len());
                    points.push(z);
                    weights.push(1.0);
                }
            }
        }
        let distinct = points.len();
        if distinct > params.max_points {
            let stride = distinct.div_ceil(params.max_points);
            points = points.into_iter().step_by(stride).collect();
            weights = weights.into_iter().step_by(stride).collect();
        }

        let n = points.len();
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            kernel[i * n + i] = 1.0;
            for j in 0..i {
                let v = rbf(&points[i], &points[j], gamma);
                kernel[i * n + j] = v;
                kernel[j * n + i] = v;
            }
        }
        let sol = solve_dual(
            &kernel,
            &weights,
            params.nu,
            params.tolerance,
            params.max_iterations,
        )?;

        let mut support = Vec::new();
        let mut alpha = Vec::new();
        for (p, a) in points.into_iter().zip(sol.alpha) {
            if a > 0.0 {
                support.push(p);
                alpha.push(a);
            }
        }
        Ok(Self {
            summary: SvmSummary {
                nu: params.nu,
                gamma,
                training_points: train.len(),
                distinct_points: distinct,
                used_points: n,
                support_vectors: support.len(),
                iterations: sol.iterations,
                gap: sol.gap,
            },
            scaler,
            support,
            alpha,
            rho: sol.rho,
            gamma,
            boundary: params.tolerance,
        })
    }

    /// Σαᵢ K(xᵢ, x) − ρ; negative means novel.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let z = self.scaler.transform(x);
        self.support
            .iter()
            .zip(&self.alpha)
            .map(|(s, a)| a * rbf(s, &z, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    pub fn is_novel(&self, x: &[f64]) -> bool {
        self.decision(x) < -self.boundary
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

use serde::{Deserialize, Serialize};

use super::PredictionError;

/// Distance-to-centroid novelty model: a point is novel when it lies farther
/// from the training mean than the q-quantile of the training distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub mean: Vec<f64>,
    pub threshold: f64,
    pub quantile: f64,
}

impl CentroidModel {
    pub fn fit(train: &[Vec<f64>], q: f64) -> Result<Self, PredictionError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(PredictionError::InvalidParams(format!(
                "quantile must be in (0, 1), got {q}"
            )));
        }
        let dim = super::check_dims(train)?;
        let n = train.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in train {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut d: Vec<f64> = train.iter().map(|x| euclidean(&mean, x)).collect();
        d.sort_by(f64::total_cmp);
        Ok(Self {
            threshold: quantile_sorted(&d, q),
            mean,
            quantile: q,
        })
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        euclidean(&self.mean, x)
    }

    pub fn is_novel(&self, x: &[f64]) -> bool {
        self.distance(x) > self.threshold
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Linear-interpolation quantile of sorted data (the "type 7" estimator).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

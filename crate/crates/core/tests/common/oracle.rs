//! Brute-force reference detectors written straight from the definitions:
//! each index is judged by scanning the raw slice, with no streaming state.

use adaas_core::detector::LambdaMode;

/// Mean and population std, pivoted on the first element.
pub fn stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let p = xs[0];
    let off = xs.iter().map(|x| x - p).sum::<f64>() / n;
    let var = xs.iter().map(|x| ((x - p) - off).powi(2)).sum::<f64>() / n;
    (p + off, var.sqrt())
}

/// Fires at i when every one of the last `n` values is at least `v`.
pub fn fixed_threshold(values: &[f64], v: f64, n: usize) -> Vec<usize> {
    (0..values.len())
        .filter(|&i| i + 1 >= n && values[i + 1 - n..=i].iter().all(|&x| x >= v))
        .collect()
}

/// Fires at i when |v_i − mean(prev Δ)| > σ · std(prev Δ).
pub fn sigma_limit(values: &[f64], delta: usize, sigma: f64) -> Vec<usize> {
    (delta..values.len())
        .filter(|&i| {
            let (m, s) = stats(&values[i - delta..i]);
            (values[i] - m).abs() > sigma * s
        })
        .collect()
}

/// Fires at i when the means of the two adjacent Δ-windows ending at i differ by more than λ.
pub fn mean_shift(values: &[f64], delta: usize, lambda: LambdaMode) -> Vec<usize> {
    if values.len() < 2 * delta {
        return Vec::new();
    }
    (2 * delta - 1..values.len())
        .filter(|&i| {
            let prev = &values[i + 1 - 2 * delta..i + 1 - delta];
            let cur = &values[i + 1 - delta..=i];
            let (mp, sp) = stats(prev);
            let (mc, _) = stats(cur);
            let l = match lambda {
                LambdaMode::Fixed(l) => l,
                LambdaMode::PrevWindowStd => sp,
            };
            (mp - mc).abs() > l
        })
        .collect()
}

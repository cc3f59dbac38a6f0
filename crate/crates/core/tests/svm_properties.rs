mod common;

use adaas_core::prediction::{rbf, solve_dual};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn nu_brackets_outliers_and_support_vectors() {
    common::scenarios::nu_property(15, 21).unwrap();
}

fn objective(k: &[f64], a: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i] * a[j] * k[i * n + j];
        }
    }
    0.5 * s
}

/// Minimize over a fine grid of the feasible set of a 3-variable dual.
fn brute_force(k: &[f64], w: &[f64], total: f64) -> f64 {
    let steps = 400;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        let a0 = w[0] * i as f64 / steps as f64;
        for j in 0..=steps {
            let a1 = w[1] * j as f64 / steps as f64;
            let a2 = total - a0 - a1;
            if (0.0..=w[2]).contains(&a2) {
                best = best.min(objective(k, &[a0, a1, a2]));
            }
        }
    }
    best
}

#[test]
fn tiny_dual_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let pts: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(1..4) as f64).collect();
        let nu = rng.random_range(0.2..0.9);
        let mut k = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                k[i * 3 + j] = rbf(&pts[i], &pts[j], 0.5);
            }
        }
        let sol = solve_dual(&k, &w, nu, 1e-6, 1_000_000).unwrap();
        let total: f64 = nu * w.iter().sum::<f64>();
        assert!((sol.alpha.iter().sum::<f64>() - total).abs() < 1e-9);
        for (a, wi) in sol.alpha.iter().zip(&w) {
            assert!(*a >= -1e-12 && *a <= wi + 1e-12);
        }
        let got = objective(&k, &sol.alpha);
        let grid = brute_force(&k, &w, total);
        // the grid can only be as good as the optimum, and is close to it
        assert!(got <= grid + 1e-6, "solver {got} worse than grid {grid}");
        assert!(grid - got < 2e-2 * grid.max(1e-3), "grid {grid} far from solver {got}");
    }
}

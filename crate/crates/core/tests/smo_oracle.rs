//! SMO against a brute-force dual maximizer.
//!
//! The oracle enumerates the dual variables on a coarse grid (step 0.05),
//! eliminating the last multiplier through the equality constraint, and
//! evaluates the dual objective directly. Small instances only.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use touchauth_core::classifiers::svm::{
    decision_value, max_kkt_violation, smo_solve, KernelMatrix,
};

const GRID_STEP: f64 = 0.05;

fn oracle_objective(k: &KernelMatrix, y: &[f64], alphas: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alphas[i] * alphas[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Maximizes the dual over the grid {0, 0.05, ..., C}^(n-1), solving the last
/// alpha from sum(alpha_i y_i) = 0.
fn grid_dual_max(k: &KernelMatrix, y: &[f64], c: f64) -> Vec<f64> {
    let n = y.len();
    let steps = (c / GRID_STEP).round() as usize;
    let mut best_obj = f64::NEG_INFINITY;
    let mut best: Vec<f64> = vec![0.0; n];
    let mut counter = vec![0usize; n - 1];
    let mut alphas = vec![0.0; n];
    loop {
        for (a, &ticks) in alphas.iter_mut().zip(&counter) {
            *a = ticks as f64 * GRID_STEP;
        }
        let partial: f64 = alphas[..n - 1].iter().zip(y).map(|(a, yi)| a * yi).sum();
        let last = -partial * y[n - 1];
        if (0.0..=c).contains(&last) {
            alphas[n - 1] = last;
            let obj = oracle_objective(k, y, &alphas);
            if obj > best_obj {
                best_obj = obj;
                best = alphas.clone();
            }
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == n - 1 {
                return best;
            }
            counter[pos] += 1;
            if counter[pos] <= steps {
                break;
            }
            counter[pos] = 0;
            pos += 1;
        }
    }
}

/// Bias from the oracle's multipliers: mean of y_i - sum_j a_j y_j K(i, j)
/// over free support vectors, or the feasible midpoint if none are free.
fn oracle_bias(k: &KernelMatrix, y: &[f64], alphas: &[f64], c: f64) -> f64 {
    let n = y.len();
    let margin = |i: usize| -> f64 {
        let mut v = 0.0;
        for j in 0..n {
            v += alphas[j] * y[j] * k.get(i, j);
        }
        y[i] - v
    };
    let free: Vec<f64> = (0..n)
        .filter(|&i| alphas[i] > 1e-9 && alphas[i] < c - 1e-9)
        .map(margin)
        .collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    // Feasible interval midpoint: b must keep y_i f_i >= 1 for alpha = 0 and
    // <= 1 for alpha = C.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let m = margin(i);
        let at_upper = alphas[i] >= c - 1e-9;
        let at_lower = alphas[i] <= 1e-9;
        if y[i] > 0.0 {
            if at_lower {
                hi = hi.min(m);
            }
            if at_upper {
                lo = lo.max(m);
            }
        } else {
            if at_lower {
                lo = lo.max(m);
            }
            if at_upper {
                hi = hi.min(m);
            }
        }
    }
    if lo.is_finite() && hi.is_finite() {
        (lo + hi) / 2.0
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

fn small_instance(seed: u64, n_per_class: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..2 * n_per_class {
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        rows.push(vec![
            sign * 2.0 + rng.gen_range(-0.7..0.7),
            sign * 1.0 + rng.gen_range(-0.7..0.7),
        ]);
        y.push(sign);
    }
    (rows, y)
}

#[test]
fn decision_values_match_grid_oracle_on_small_instances() {
    for seed in [31u64, 32, 33] {
        let (rows, y) = small_instance(seed, 3);
        let kernel = KernelMatrix::rbf(&rows, 0.5);
        let c = 1.0;
        let sol = smo_solve(&kernel, &y, c, 1e-3).unwrap();

        let grid_alphas = grid_dual_max(&kernel, &y, c);
        let grid_bias = oracle_bias(&kernel, &y, &grid_alphas, c);
        for i in 0..y.len() {
            let f_smo = decision_value(&kernel, &y, &sol, i);
            let mut f_grid = grid_bias;
            for j in 0..y.len() {
                f_grid += grid_alphas[j] * y[j] * kernel.get(i, j);
            }
            assert!(
                (f_smo - f_grid).abs() <= 5e-2,
                "seed {seed} point {i}: smo {f_smo} vs grid {f_grid}"
            );
        }
    }
}

#[test]
fn separable_2d_sets_satisfy_kkt_within_tolerance() {
    for seed in [41u64, 42, 43] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 50;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
            rows.push(vec![
                sign * 3.0 + rng.gen_range(-1.0..1.0),
                sign * 2.0 + rng.gen_range(-1.0..1.0),
            ]);
            y.push(sign);
        }
        let kernel = KernelMatrix::rbf(&rows, 0.5);
        let sol = smo_solve(&kernel, &y, 1.0, 1e-3).unwrap();
        let violation = max_kkt_violation(&kernel, &y, 1.0, &sol);
        assert!(violation <= 1e-3, "seed {seed}: KKT violation {violation}");
        let sum_ay: f64 = sol.alphas.iter().zip(&y).map(|(a, yi)| a * yi).sum();
        assert!(sum_ay.abs() <= 1e-6, "seed {seed}: sum alpha*y = {sum_ay}");
    }
}

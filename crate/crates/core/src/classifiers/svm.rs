//! Support vector classification: a sequential-minimal-optimization solver
//! for the binary soft-margin dual, composed one-vs-one for multiclass.
//!
//! The solver is Platt-style SMO over a precomputed kernel matrix with an
//! incrementally maintained error cache. All pair-selection heuristics are
//! deterministic (no random second choice), so equal inputs produce equal
//! models. Convergence means every multiplier satisfies the KKT conditions
//! within `tol`.

use serde::{Deserialize, Serialize};

use super::{sorted_distinct_labels, squared_distance, ClassScores, ModelError};

/// Dense symmetric kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        KernelMatrix { n, data }
    }

    pub fn rbf(rows: &[Vec<f64>], gamma: f64) -> Self {
        Self::from_fn(rows.len(), |i, j| rbf_kernel(&rows[i], &rows[j], gamma))
    }

    pub fn linear(rows: &[Vec<f64>]) -> Self {
        Self::from_fn(rows.len(), |i, j| {
            rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum()
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * squared_distance(a, b)).exp()
}

/// The `scale` gamma convention: 1 / (d * Var(all matrix entries)).
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let d = x.first().map(|r| r.len()).unwrap_or(0);
    let count = (x.len() * d) as f64;
    if count == 0.0 {
        return 1.0;
    }
    let mean: f64 = x.iter().flatten().sum::<f64>() / count;
    let var: f64 = x
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub passes: usize,
}

/// Dual objective W(alpha) = sum(alpha) - 1/2 sum_ij a_i a_j y_i y_j K_ij.
pub fn dual_objective(kernel: &KernelMatrix, y: &[f64], alphas: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alphas[j] == 0.0 {
                continue;
            }
            quad += alphas[i] * alphas[j] * y[i] * y[j] * kernel.get(i, j);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

/// Decision value f(x_i) = sum_j alpha_j y_j K(i, j) + b for a training point.
pub fn decision_value(kernel: &KernelMatrix, y: &[f64], sol: &SmoSolution, i: usize) -> f64 {
    let row = kernel.row(i);
    sol.alphas
        .iter()
        .zip(y)
        .zip(row)
        .map(|((a, yi), k)| a * yi * k)
        .sum::<f64>()
        + sol.bias
}

/// Largest KKT violation over all multipliers: how far y_i f(x_i) strays from
/// the side of 1 its alpha requires.
pub fn max_kkt_violation(kernel: &KernelMatrix, y: &[f64], c: f64, sol: &SmoSolution) -> f64 {
    let bound_eps = 1e-9 * c.max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..y.len() {
        let r = y[i] * decision_value(kernel, y, sol, i);
        let a = sol.alphas[i];
        let v = if a <= bound_eps {
            (1.0 - r).max(0.0)
        } else if a >= c - bound_eps {
            (r - 1.0).max(0.0)
        } else {
            (r - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

struct SmoState<'a> {
    kernel: &'a KernelMatrix,
    y: &'a [f64],
    c: f64,
    alphas: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    /// Dual objective, maintained incrementally; drives stall detection only.
    objective: f64,
}

// Minimum meaningful multiplier step, per Platt.
const STEP_EPS: f64 = 1e-12;

impl SmoState<'_> {
    /// alpha_i may still increase its y_i-weighted value.
    fn in_up(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alphas[i] < self.c
        } else {
            self.alphas[i] > 0.0
        }
    }

    fn in_low(&self, i: usize) -> bool {
        if self.y[i] > 0.0 {
            self.alphas[i] > 0.0
        } else {
            self.alphas[i] < self.c
        }
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alphas[i1], self.alphas[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (low, high) = if (y1 - y2).abs() > 0.5 {
            (
                (a2_old - a1_old).max(0.0),
                (self.c + a2_old - a1_old).min(self.c),
            )
        } else {
            (
                (a1_old + a2_old - self.c).max(0.0),
                (a1_old + a2_old).min(self.c),
            )
        };
        if low >= high {
            return false;
        }
        let k11 = self.kernel.get(i1, i1);
        let k12 = self.kernel.get(i1, i2);
        let k22 = self.kernel.get(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;
        let a2_new = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(low, high)
        } else {
            // Flat or concave along this pair: evaluate the objective at the
            // segment ends and move to the better one.
            let f1 = y1 * e1 - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * e2 - s * a1_old * k12 - a2_old * k22;
            let l1 = a1_old + s * (a2_old - low);
            let h1 = a1_old + s * (a2_old - high);
            let obj_low = l1 * f1
                + low * f2
                + 0.5 * l1 * l1 * k11
                + 0.5 * low * low * k22
                + s * low * l1 * k12;
            let obj_high = h1 * f1
                + high * f2
                + 0.5 * h1 * h1 * k11
                + 0.5 * high * high * k22
                + s * high * h1 * k12;
            if obj_low < obj_high - STEP_EPS {
                low
            } else if obj_low > obj_high + STEP_EPS {
                high
            } else {
                return false;
            }
        };
        if (a2_new - a2_old).abs() < STEP_EPS * (a2_new + a2_old + STEP_EPS) {
            return false;
        }
        let a1_new = a1_old + s * (a2_old - a2_new);
        // Snap to exact bounds: a residue like 1e-16 would leave the point
        // formally movable for pair selection with no actual room to move.
        let snap = |a: f64| {
            let eps = STEP_EPS * self.c.max(1.0);
            if a < eps {
                0.0
            } else if a > self.c - eps {
                self.c
            } else {
                a
            }
        };
        let a1_new = snap(a1_new);
        let a2_new = snap(a2_new);
        let d1 = y1 * (a1_new - a1_old);
        let d2 = y2 * (a2_new - a2_old);
        // O(1) objective delta: with beta = y .* alpha changing by d1, d2 on
        // this pair, dW = d(sum alpha) - dbeta'Kbeta - 1/2 dbeta'K dbeta.
        let v1 = e1 + y1 - self.bias;
        let v2 = e2 + y2 - self.bias;
        self.objective += (a1_new - a1_old) + (a2_new - a2_old)
            - d1 * v1
            - d2 * v2
            - 0.5 * (d1 * d1 * k11 + d2 * d2 * k22)
            - d1 * d2 * k12;
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let delta_b = new_bias - self.bias;
        let row1 = self.kernel.row(i1);
        let row2 = self.kernel.row(i2);
        for ((err, k1), k2) in self.errors.iter_mut().zip(row1).zip(row2) {
            *err += d1 * k1 + d2 * k2 + delta_b;
        }
        self.alphas[i1] = a1_new;
        self.alphas[i2] = a2_new;
        self.bias = new_bias;
        true
    }

    /// Maximal-violating-pair selection with a second-order second choice:
    /// `i` minimizes E over the up-set; `j` maximizes the guaranteed
    /// objective gain (E_j - E_i)^2 / eta over low-set candidates. Returns
    /// the pair and the current violation gap, or None when no candidate
    /// remains.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let n = self.y.len();
        let mut i_best: Option<usize> = None;
        let mut e_min_up = f64::INFINITY;
        let mut e_max_low = f64::NEG_INFINITY;
        for t in 0..n {
            if self.in_up(t) && self.errors[t] < e_min_up {
                e_min_up = self.errors[t];
                i_best = Some(t);
            }
            if self.in_low(t) && self.errors[t] > e_max_low {
                e_max_low = self.errors[t];
            }
        }
        let i = i_best?;
        if !e_max_low.is_finite() {
            return None;
        }
        let gap = e_max_low - e_min_up;
        let k_ii = self.kernel.get(i, i);
        let mut j_best: Option<usize> = None;
        let mut best_gain = f64::NEG_INFINITY;
        for t in 0..n {
            if t == i || !self.in_low(t) {
                continue;
            }
            let diff = self.errors[t] - e_min_up;
            if diff <= 0.0 {
                continue;
            }
            let eta = (k_ii + self.kernel.get(t, t) - 2.0 * self.kernel.get(i, t)).max(STEP_EPS);
            let gain = diff * diff / eta;
            if gain > best_gain {
                best_gain = gain;
                j_best = Some(t);
            }
        }
        j_best.map(|j| (i, j, gap))
    }
}

/// Solves the binary soft-margin dual over a precomputed kernel matrix.
///
/// `y` must hold both +1 and -1 labels. On success every multiplier lies in
/// `[0, c]`, `sum(alpha_i y_i)` is zero up to rounding, and the KKT
/// conditions hold within `tol`.
pub fn smo_solve(
    kernel: &KernelMatrix,
    y: &[f64],
    c: f64,
    tol: f64,
) -> Result<SmoSolution, ModelError> {
    smo_solve_traced(kernel, y, c, tol, None)
}

/// As [`smo_solve`], pushing the dual objective after every accepted pair
/// update into `trace` (used to check the objective never decreases).
pub fn smo_solve_traced(
    kernel: &KernelMatrix,
    y: &[f64],
    c: f64,
    tol: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SmoSolution, ModelError> {
    let n = y.len();
    if kernel.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: kernel.len(),
            got: n,
        });
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(ModelError::InvalidParam("labels must be +1 or -1".into()));
    }
    if !y.iter().any(|&v| v == 1.0) || !y.iter().any(|&v| v == -1.0) {
        return Err(ModelError::SingleClass);
    }
    if c <= 0.0 {
        return Err(ModelError::InvalidParam(format!("C={c} must be positive")));
    }
    let mut state = SmoState {
        kernel,
        y,
        c,
        alphas: vec![0.0; n],
        bias: 0.0,
        errors: y.iter().map(|&v| -v).collect(),
        objective: 0.0,
    };
    // Stop when the maximal violation gap max_low(E) - min_up(E) falls to
    // 2*tol: with the midpoint bias correction below, every multiplier then
    // satisfies its KKT condition within tol. Abort after a run of steps
    // that move multipliers without improving the dual (a numerical cycle)
    // or at a generous absolute cap.
    let max_stalled = (10 * n).max(50);
    let max_total = (200 * n).max(20_000);
    let mut passes = 0;
    let mut stalled = 0;
    loop {
        passes += 1;
        if passes > max_total {
            return Err(ModelError::NoConvergence { passes, pair: None });
        }
        let Some((i, j, gap)) = state.select_pair() else {
            break;
        };
        if gap <= 2.0 * tol {
            break;
        }
        let objective_before = state.objective;
        let stepped = if state.take_step(i, j) {
            true
        } else {
            // Deadlocked best pair: fall back to the first movable candidate.
            let mut moved = false;
            for t in 0..n {
                if t != i && state.in_low(t) && state.errors[t] - state.errors[i] > 0.0 {
                    if state.take_step(i, t) {
                        moved = true;
                        break;
                    }
                }
            }
            moved
        };
        if !stepped {
            return Err(ModelError::NoConvergence { passes, pair: None });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(dual_objective(kernel, y, &state.alphas));
        }
        if state.objective > objective_before + 1e-12 * (1.0 + objective_before.abs()) {
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > max_stalled {
                return Err(ModelError::NoConvergence { passes, pair: None });
            }
        }
    }
    // Center the bias between the tightest up/low errors so free support
    // vectors sit symmetrically around the margin.
    let mut e_min_up = f64::INFINITY;
    let mut e_max_low = f64::NEG_INFINITY;
    for t in 0..n {
        if state.in_up(t) {
            e_min_up = e_min_up.min(state.errors[t]);
        }
        if state.in_low(t) {
            e_max_low = e_max_low.max(state.errors[t]);
        }
    }
    if e_min_up.is_finite() && e_max_low.is_finite() {
        state.bias -= (e_min_up + e_max_low) / 2.0;
    }
    Ok(SmoSolution {
        alphas: state.alphas,
        bias: state.bias,
        passes,
    })
}

/// One binary machine of the one-vs-one ensemble. `first < second`; training
/// rows of `first` take label +1, so a positive decision votes `first`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMachine {
    pub first: u8,
    pub second: u8,
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl PairMachine {
    pub fn decision(&self, query: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * rbf_kernel(sv, query, gamma))
            .sum::<f64>()
            + self.bias
    }

    /// Equals sum(alpha_i y_i); zero up to rounding for a converged solve.
    pub fn sum_alpha_y(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub classes: Vec<u8>,
    pub machines: Vec<PairMachine>,
    pub gamma: f64,
    pub c: f64,
    pub n_features: usize,
}

/// Fits one RBF machine per unordered class pair (one-vs-one).
///
/// `gamma = None` selects the `scale` convention computed on the full
/// training matrix.
pub fn svc_fit(
    x: &[Vec<f64>],
    labels: &[u8],
    c: f64,
    gamma: Option<f64>,
) -> Result<SvcModel, ModelError> {
    if x.is_empty() || x.len() != labels.len() {
        return Err(ModelError::InsufficientData(format!(
            "{} rows, {} labels",
            x.len(),
            labels.len()
        )));
    }
    let classes = sorted_distinct_labels(labels);
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    let gamma = gamma.unwrap_or_else(|| scale_gamma(x));
    let tol = 1e-3;
    let mut machines = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for (ui, &u) in classes.iter().enumerate() {
        for &v in &classes[ui + 1..] {
            let mut rows: Vec<Vec<f64>> = Vec::new();
            let mut y: Vec<f64> = Vec::new();
            for (row, &label) in x.iter().zip(labels) {
                if label == u || label == v {
                    rows.push(row.clone());
                    y.push(if label == u { 1.0 } else { -1.0 });
                }
            }
            let kernel = KernelMatrix::rbf(&rows, gamma);
            let sol = smo_solve(&kernel, &y, c, tol).map_err(|e| match e {
                ModelError::NoConvergence { passes, .. } => ModelError::NoConvergence {
                    passes,
                    pair: Some((u, v)),
                },
                other => other,
            })?;
            let mut support_vectors = Vec::new();
            let mut coefficients = Vec::new();
            for (i, &a) in sol.alphas.iter().enumerate() {
                if a > 1e-12 {
                    support_vectors.push(rows[i].clone());
                    coefficients.push(a * y[i]);
                }
            }
            machines.push(PairMachine {
                first: u,
                second: v,
                support_vectors,
                coefficients,
                bias: sol.bias,
            });
        }
    }
    Ok(SvcModel {
        classes,
        machines,
        gamma,
        c,
        n_features: x[0].len(),
    })
}

impl SvcModel {
    /// Pair votes plus a bounded decision-value tie-break term per class.
    ///
    /// The vote component is integral, the tie term lies in [0, 1), so the
    /// vote ordering always dominates and `floor(score)` recovers the votes.
    pub fn predict(&self, query: &[f64]) -> Result<ClassScores, ModelError> {
        if query.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: query.len(),
            });
        }
        let mut votes = vec![0.0f64; self.classes.len()];
        let mut decision_sums = vec![0.0f64; self.classes.len()];
        for m in &self.machines {
            let f = m.decision(query, self.gamma);
            let fi = self.classes.binary_search(&m.first).expect("class in set");
            let si = self.classes.binary_search(&m.second).expect("class in set");
            if f >= 0.0 {
                votes[fi] += 1.0;
            } else {
                votes[si] += 1.0;
            }
            decision_sums[fi] += f;
            decision_sums[si] -= f;
        }
        let scores: Vec<f64> = votes
            .iter()
            .zip(&decision_sums)
            .map(|(v, s)| {
                let squashed = s / (1.0 + s.abs());
                v + (squashed + 1.0) / 2.0
            })
            .collect();
        Ok(ClassScores {
            labels: self.classes.clone(),
            scores,
        })
    }
}

//! Sparse recovery from compressed measurements.
//!
//! These solvers validate the measurement model on synthetic signals; the
//! classification pipeline never reconstructs. `ista_l1` solves the
//! L1-regularized least-squares (LASSO) relaxation, `omp` is the greedy
//! surrogate for the combinatorial L0 program, and `brute_force_l0` is the
//! exhaustive oracle for tiny problem sizes.

use crate::error::{Error, Result};
use crate::sensing::{Measurement, SensingMatrix};
use ndarray::{Array1, Array2};

/// A signal together with its L0 sparsity.
#[derive(Debug, Clone)]
pub struct SparseSignal {
    pub values: Array1<f64>,
    pub sparsity: usize,
}

impl SparseSignal {
    pub fn new(values: Array1<f64>) -> Self {
        let sparsity = values.iter().filter(|v| **v != 0.0).count();
        Self { values, sparsity }
    }

    /// `s` unit-magnitude spikes (signs from the rng stream) on a random
    /// support of a length-`n` vector.
    pub fn random_spikes(n: usize, s: usize, rng: &mut crate::rng::SplitMix64) -> Self {
        assert!(s <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let mut values = Array1::zeros(n);
        for &i in idx.iter().take(s) {
            values[i] = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
        }
        Self::new(values)
    }

    /// `s` standard-normal coefficients on a random support; the usual
    /// signal model for recovery benchmarks.
    pub fn random_gaussian(n: usize, s: usize, rng: &mut crate::rng::SplitMix64) -> Self {
        assert!(s <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        let mut values = Array1::zeros(n);
        for &i in idx.iter().take(s) {
            values[i] = rng.next_normal();
        }
        Self::new(values)
    }

    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Output of a recovery solver.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub estimate: Array1<f64>,
    /// `‖Φ·estimate − y‖₂`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Composite objective value after each iteration (ISTA only; empty for
    /// the greedy/exhaustive solvers).
    pub objective_trace: Vec<f64>,
}

/// Indices where `|x[i]|` exceeds `threshold`.
pub fn support_above(x: &Array1<f64>, threshold: f64) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(i, _)| i)
        .collect()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of ΦᵀΦ (squared spectral norm of Φ) by power
/// iteration; upper-bounds the gradient Lipschitz constant for ISTA.
fn lipschitz_estimate(dense: &Array2<f64>, iters: usize) -> f64 {
    let n = dense.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 1.0;
    for _ in 0..iters {
        let w = dense.t().dot(&dense.dot(&v));
        lambda = w.dot(&w).sqrt();
        if lambda < 1e-300 {
            return 1.0;
        }
        v = w / lambda;
    }
    lambda
}

/// Default regularization weight: `1e-3 * ‖Φᵀy‖_∞`.
pub fn default_lambda(matrix: &SensingMatrix, y: &Measurement) -> f64 {
    let corr = matrix.dense().t().dot(y);
    1e-3 * corr.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Iterative soft-thresholding for `min ½‖Φx − y‖₂² + λ‖x‖₁`.
///
/// Step size is `0.99 / L` with `L` from 50 power-iteration steps, which
/// makes the composite objective non-increasing; `converged` reports whether
/// the iterate change dropped below `tol` before `max_iters`.
pub fn ista_l1(
    y: &Measurement,
    matrix: &SensingMatrix,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<RecoveryResult> {
    if y.len() != matrix.rows() {
        return Err(Error::dim(format!(
            "ista_l1: measurement length {} != matrix rows {}",
            y.len(),
            matrix.rows()
        )));
    }
    if lambda <= 0.0 {
        return Err(Error::config("ista_l1: lambda must be positive"));
    }
    let dense = matrix.dense();
    let step = 0.99 / lipschitz_estimate(&dense, 50);
    let n = matrix.cols();
    let mut x = Array1::zeros(n);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let objective = |x: &Array1<f64>| -> f64 {
        let r = dense.dot(x) - y;
        0.5 * r.dot(&r) + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    };

    for _ in 0..max_iters {
        let grad = dense.t().dot(&(dense.dot(&x) - y));
        let next = Array1::from_shape_fn(n, |i| {
            soft_threshold(x[i] - step * grad[i], step * lambda)
        });
        let delta = (&next - &x).mapv(f64::abs).sum();
        x = next;
        iterations += 1;
        trace.push(objective(&x));
        if delta < tol {
            converged = true;
            break;
        }
    }

    let residual = dense.dot(&x) - y;
    Ok(RecoveryResult {
        estimate: x,
        residual_norm: residual.dot(&residual).sqrt(),
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Solve the least-squares subproblem on `support` via the normal equations
/// (Cholesky). Supports here are tiny (≤ M columns, usually ≤ s).
fn least_squares_on_support(
    dense: &Array2<f64>,
    y: &Measurement,
    support: &[usize],
) -> Result<Vec<f64>> {
    let k = support.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let m = dense.nrows();
    let mut gram = vec![vec![0.0; k]; k];
    let mut rhs = vec![0.0; k];
    for (a, &ca) in support.iter().enumerate() {
        for (b, &cb) in support.iter().enumerate().skip(a) {
            let mut dot = 0.0;
            for r in 0..m {
                dot += dense[[r, ca]] * dense[[r, cb]];
            }
            gram[a][b] = dot;
            gram[b][a] = dot;
        }
        let mut dot = 0.0;
        for r in 0..m {
            dot += dense[[r, ca]] * y[r];
        }
        rhs[a] = dot;
    }
    // Cholesky factorization of the Gram matrix.
    let mut chol = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = gram[i][j];
            for p in 0..j {
                sum -= chol[i][p] * chol[j][p];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::data(
                        "singular least-squares subproblem (dependent columns)",
                    ));
                }
                chol[i][j] = sum.sqrt();
            } else {
                chol[i][j] = sum / chol[j][j];
            }
        }
    }
    // Forward/backward substitution.
    let mut z = vec![0.0; k];
    for i in 0..k {
        let mut sum = rhs[i];
        for p in 0..i {
            sum -= chol[i][p] * z[p];
        }
        z[i] = sum / chol[i][i];
    }
    let mut coef = vec![0.0; k];
    for i in (0..k).rev() {
        let mut sum = z[i];
        for p in (i + 1)..k {
            sum -= chol[p][i] * coef[p];
        }
        coef[i] = sum / chol[i][i];
    }
    Ok(coef)
}

fn assemble(n: usize, support: &[usize], coef: &[f64]) -> Array1<f64> {
    let mut x = Array1::zeros(n);
    for (&i, &c) in support.iter().zip(coef.iter()) {
        x[i] = c;
    }
    x
}

/// Orthogonal matching pursuit: greedily selects the column whose
/// normalized correlation with the residual is largest, then refits by
/// least squares over the selected set, `s` times.
pub fn omp(y: &Measurement, matrix: &SensingMatrix, s: usize) -> Result<RecoveryResult> {
    let m = matrix.rows();
    let n = matrix.cols();
    if y.len() != m {
        return Err(Error::dim(format!(
            "omp: measurement length {} != matrix rows {}",
            y.len(),
            m
        )));
    }
    if s == 0 || s > m {
        return Err(Error::config(format!("omp: sparsity {s} out of range 1..={m}")));
    }
    let dense = matrix.dense();
    // Selection normalizes by column norm so column scaling cannot bias the
    // greedy step; zero columns are never selected.
    let inv_norms: Vec<f64> = (0..n)
        .map(|j| {
            let nrm = dense.column(j).dot(&dense.column(j)).sqrt();
            if nrm > 0.0 {
                1.0 / nrm
            } else {
                0.0
            }
        })
        .collect();
    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut selected = vec![false; n];
    let mut x = Array1::zeros(n);
    let mut residual = y.clone();
    let mut iterations = 0;

    for _ in 0..s {
        let corr = dense.t().dot(&residual);
        let mut best = None;
        let mut best_val = 0.0;
        for j in 0..n {
            if selected[j] {
                continue;
            }
            let v = corr[j].abs() * inv_norms[j];
            if best.is_none() || v > best_val {
                best = Some(j);
                best_val = v;
            }
        }
        let j = best.expect("support smaller than column count");
        selected[j] = true;
        support.push(j);
        let coef = least_squares_on_support(&dense, y, &support)?;
        x = assemble(n, &support, &coef);
        residual = y - &dense.dot(&x);
        iterations += 1;
        if residual.dot(&residual).sqrt() < 1e-12 {
            break;
        }
    }

    Ok(RecoveryResult {
        residual_norm: residual.dot(&residual).sqrt(),
        estimate: x,
        iterations,
        converged: true,
        objective_trace: Vec::new(),
    })
}

/// Exhaustive search over all supports of size ≤ `s`, in lexicographic
/// order; the first support attaining the minimum residual wins. Guarded to
/// `N ≤ 20`, `s ≤ 3`.
pub fn brute_force_l0(
    y: &Measurement,
    matrix: &SensingMatrix,
    s: usize,
) -> Result<RecoveryResult> {
    let n = matrix.cols();
    if n > 20 {
        return Err(Error::config(format!(
            "brute_force_l0: N = {n} exceeds the combinatorial guard (20)"
        )));
    }
    if s > 3 {
        return Err(Error::config(format!(
            "brute_force_l0: s = {s} exceeds the combinatorial guard (3)"
        )));
    }
    if y.len() != matrix.rows() {
        return Err(Error::dim("brute_force_l0: measurement length mismatch"));
    }
    let dense = matrix.dense();

    struct Search<'a> {
        dense: &'a Array2<f64>,
        y: &'a Measurement,
        n: usize,
        s: usize,
        best_norm: f64,
        best: Option<(Vec<usize>, Vec<f64>)>,
    }

    impl Search<'_> {
        fn consider(&mut self, support: &[usize]) {
            let Ok(coef) = least_squares_on_support(self.dense, self.y, support) else {
                return;
            };
            let x = assemble(self.n, support, &coef);
            let r = self.y - &self.dense.dot(&x);
            let norm = r.dot(&r).sqrt();
            // Strict improvement keeps the lexicographically first support
            // among exact ties (visit order is lexicographic).
            if self.best.is_none() || norm < self.best_norm {
                self.best_norm = norm;
                self.best = Some((support.to_vec(), coef));
            }
        }

        fn visit(&mut self, support: &mut Vec<usize>, from: usize) {
            self.consider(support);
            if support.len() == self.s {
                return;
            }
            for j in from..self.n {
                support.push(j);
                self.visit(support, j + 1);
                support.pop();
            }
        }
    }

    let mut search =
        Search { dense: &dense, y, n, s, best_norm: f64::INFINITY, best: None };
    search.visit(&mut Vec::new(), 0);
    let (support, coef) = search.best.expect("empty support always considered");
    Ok(RecoveryResult {
        estimate: assemble(n, &support, &coef),
        residual_norm: search.best_norm,
        iterations: 0,
        converged: true,
        objective_trace: Vec::new(),
    })
}

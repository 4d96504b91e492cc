//! Jacobi splitting `A = D + L + U` and the vectorial Jacobi iteration
//! `u(k+1) = u(k) + D^-1 (b - A u(k))`.

use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{inf_norm, spmv_into, CsrMatrix, SparseError};
use crate::report::{SolveReport, Variant};

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 50_000;
/// A residual norm this many times larger than the first one aborts the solve.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

const SPECTRAL_RESTARTS: usize = 3;
const SPECTRAL_SEED: u64 = 0x5eed_1ac0b1;

/// How ranks agree that the iteration has converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceMode {
    /// Max-reduce the local residual norms and compare the global norm with epsilon.
    #[default]
    GlobalNorm,
    /// Every rank tests its own residual block; logical-AND of the outcomes.
    SimultaneousLocal,
}

impl std::str::FromStr for ConvergenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global-norm" => Ok(ConvergenceMode::GlobalNorm),
            "simultaneous-local" => Ok(ConvergenceMode::SimultaneousLocal),
            other => Err(format!("unknown convergence mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Global initial iterate; zero when absent.
    pub initial_guess: Option<Vec<f64>>,
    pub convergence: ConvergenceMode,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        JacobiConfig {
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            initial_guess: None,
            convergence: ConvergenceMode::GlobalNorm,
        }
    }
}

impl JacobiConfig {
    pub fn new(epsilon: f64, max_iterations: usize) -> Self {
        JacobiConfig {
            epsilon,
            max_iterations,
            ..Default::default()
        }
    }

    pub fn with_mode(mut self, mode: ConvergenceMode) -> Self {
        self.convergence = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SparseError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(SparseError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(SparseError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// The starting iterate for a system of size `n`.
    pub fn initial_iterate(&self, n: usize) -> Result<Vec<f64>, SparseError> {
        match &self.initial_guess {
            Some(u0) if u0.len() != n => Err(SparseError::DimensionMismatch {
                expected: n,
                found: u0.len(),
            }),
            Some(u0) => Ok(u0.clone()),
            None => Ok(vec![0.0; n]),
        }
    }
}

fn require_square(a: &CsrMatrix) -> Result<(), SparseError> {
    if a.is_square() {
        Ok(())
    } else {
        Err(SparseError::NotSquare {
            n_rows: a.n_rows(),
            n_cols: a.n_cols(),
        })
    }
}

/// `d[i] = 1 / A[i,i]`, computed once before iterating.
pub fn extract_inverse_diagonal(a: &CsrMatrix) -> Result<Vec<f64>, SparseError> {
    require_square(a)?;
    (0..a.n_rows())
        .map(|i| match a.get(i, i) {
            Some(d) if d != 0.0 => Ok(1.0 / d),
            _ => Err(SparseError::SingularDiagonal { row: i }),
        })
        .collect()
}

/// `||b - A u||_inf`.
///
/// For the Jacobi update this is also `||D (u(k+1) - u(k))||_inf`, the
/// diagonally weighted stopping norm, because `u(k+1) - u(k) = D^-1 r`.
pub fn weighted_residual_norm(a: &CsrMatrix, b: &[f64], u: &[f64]) -> Result<f64, SparseError> {
    if b.len() != a.n_rows() {
        return Err(SparseError::DimensionMismatch {
            expected: a.n_rows(),
            found: b.len(),
        });
    }
    let mut q = vec![0.0; a.n_rows()];
    spmv_into(a, u, &mut q)?;
    Ok(b.iter().zip(&q).fold(0.0, |m: f64, (bi, qi)| m.max((bi - qi).abs())))
}

/// `|a_ii| >= sum_{j != i} |a_ij|` for every row.
pub fn is_diagonally_dominant(a: &CsrMatrix) -> bool {
    if !a.is_square() {
        return false;
    }
    (0..a.n_rows()).all(|i| {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut off = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v.abs();
            } else {
                off += v.abs();
            }
        }
        diag >= off
    })
}

/// Estimates the spectral radius of the Jacobi iteration matrix
/// `T = D^-1 N`, `N = -(L + U)`, with the default number of restarts.
///
/// This is a power-iteration estimate meant for small test matrices.
pub fn spectral_radius_estimate(a: &CsrMatrix, n_iterations: usize) -> Result<f64, SparseError> {
    spectral_radius_estimate_with(a, n_iterations, SPECTRAL_RESTARTS, SPECTRAL_SEED)
}

/// Power-iteration estimate of `rho(T)`, the maximum over `restarts` random starts.
///
/// Each start tracks `ln ||T^k v||` with per-step normalisation and returns
/// the geometric growth rate over the second half of the steps, so the
/// start-vector constant cancels.
pub fn spectral_radius_estimate_with(
    a: &CsrMatrix,
    n_iterations: usize,
    restarts: usize,
    seed: u64,
) -> Result<f64, SparseError> {
    if n_iterations == 0 {
        return Err(SparseError::InvalidConfig("n_iterations must be >= 1".into()));
    }
    let d_inv = extract_inverse_diagonal(a)?;
    let n = a.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    let skip = n_iterations / 2;
    for _ in 0..restarts.max(1) {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = l2(&v);
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let mut w = vec![0.0; n];
        let mut log_growth = 0.0;
        let mut estimate = None;
        for step in 1..=n_iterations {
            apply_iteration_matrix(a, &d_inv, &v, &mut w);
            let g = l2(&w);
            if g == 0.0 {
                estimate = Some(0.0);
                break;
            }
            if step > skip {
                log_growth += g.ln();
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / g;
            }
        }
        let rho = estimate.unwrap_or_else(|| (log_growth / (n_iterations - skip) as f64).exp());
        best = best.max(rho);
    }
    Ok(best)
}

/// `w = D^-1 (-(L + U)) v`, summing off-diagonal terms only.
fn apply_iteration_matrix(a: &CsrMatrix, d_inv: &[f64], v: &[f64], w: &mut [f64]) {
    for (i, wi) in w.iter_mut().enumerate() {
        let (cols, vals) = a.row(i);
        let off: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(&j, _)| j != i)
            .map(|(&j, &x)| x * v[j])
            .sum();
        *wi = -off * d_inv[i];
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sequential vectorial Jacobi.
///
/// Each pass computes `r = b - A u`, stops when `||r||_inf <= epsilon`, and
/// otherwise applies `u += D^-1 r`. `iterations` counts passes, including
/// the one whose residual test succeeded, so the returned `u` is the iterate
/// that satisfied the test.
pub fn sequential_jacobi(
    a: &CsrMatrix,
    b: &[f64],
    cfg: &JacobiConfig,
) -> Result<(Vec<f64>, SolveReport), SparseError> {
    cfg.validate()?;
    let d_inv = extract_inverse_diagonal(a)?;
    let n = a.n_rows();
    if b.len() != n {
        return Err(SparseError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let mut u = cfg.initial_iterate(n)?;
    let start = Instant::now();

    let mut q = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut report = SolveReport::new(Variant::Sequential, 1);
    let mut initial_norm = None;
    for k in 0..cfg.max_iterations {
        spmv_into(a, &u, &mut q)?;
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        let norm = inf_norm(&r);
        report.residual_history.push(norm);
        report.iterations = k + 1;
        report.residual_final = norm;
        if norm <= cfg.epsilon {
            report.converged = true;
            break;
        }
        let first = *initial_norm.get_or_insert(norm);
        if !norm.is_finite() || norm > DIVERGENCE_FACTOR * first {
            report.diverged = true;
            break;
        }
        for i in 0..n {
            u[i] += d_inv[i] * r[i];
        }
    }
    report.total_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}

//! Distributed synchronous Jacobi.
//!
//! Every variant runs the same iteration on each rank:
//!
//! 1. compute the owned rows of `q = A u` (variant-specific exchange),
//! 2. `r = b - q` on those rows,
//! 3. stop if the residual test passes on all ranks,
//! 4. `u += D^-1 r`.
//!
//! The variants differ only in how remote entries of `u`, or partial
//! interface sums of `q`, reach the rank that needs them.

mod bandrow;
mod substructuring;

use std::time::Instant;

use thiserror::Error;

use crate::fabric::{spawn_world_with, timeout_from_env, CommStats, FabricError, RankEndpoint};
use crate::mmio::{PartitionBundle, RankData};
use crate::partition::{build_dependency_lists, BandRowPartition, PartitionError};
use crate::report::{SolveReport, Variant};
use crate::sparse::{ConvergenceMode, JacobiConfig, SparseError, DIVERGENCE_FACTOR};

pub use bandrow::{jacobi_bandrow_naive, jacobi_bandrow_sparsity};
pub use substructuring::{jacobi_substructuring, substructure_spmv, InterfaceAssembler};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("{0}")]
    Unsupported(String),
    #[error("ranks disagree: {0}")]
    RankMismatch(String),
}

/// Collective convergence test on a rank's owned residual norm.
///
/// `GlobalNorm` max-reduces the local norms and compares with `epsilon`,
/// which is exactly the sequential test. `SimultaneousLocal` reduces the
/// per-rank verdicts with a logical AND.
pub fn check_convergence(
    ep: &mut RankEndpoint,
    local_norm: f64,
    epsilon: f64,
    mode: ConvergenceMode,
) -> Result<bool, FabricError> {
    match mode {
        ConvergenceMode::GlobalNorm => Ok(ep.all_reduce_max(local_norm)? <= epsilon),
        ConvergenceMode::SimultaneousLocal => ep.all_reduce_land(local_norm <= epsilon),
    }
}

/// The variant-specific half of an iteration.
pub(crate) trait LocalProduct {
    /// Computes the local rows of `A u` into `q`, with interface rows fully assembled.
    fn product(&mut self, ep: &mut RankEndpoint, u: &[f64], q: &mut [f64]) -> Result<(), SolverError>;
}

/// Rank-local Jacobi loop shared by all variants.
///
/// `owned[i]` marks the local entries counted in the residual norm; entries
/// replicated on several ranks are counted by one of them only.
pub(crate) fn run_jacobi<P: LocalProduct>(
    ep: &mut RankEndpoint,
    variant: Variant,
    product: &mut P,
    b: &[f64],
    d_inv: &[f64],
    owned: Option<&[bool]>,
    mut u: Vec<f64>,
    cfg: &JacobiConfig,
    start: Instant,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let n = u.len();
    let mut q = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut report = SolveReport::new(variant, ep.world_size());
    let mut initial_norm = None;
    for k in 0..cfg.max_iterations {
        product.product(ep, &u, &mut q)?;
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        let local_norm = match owned {
            None => crate::sparse::inf_norm(&r),
            Some(mask) => crate::sparse::inf_norm(
                &r.iter()
                    .zip(mask)
                    .filter(|(_, &o)| o)
                    .map(|(&x, _)| x)
                    .collect::<Vec<_>>(),
            ),
        };
        let (converged, norm) = match cfg.convergence {
            ConvergenceMode::GlobalNorm => {
                let norm = ep.all_reduce_max(local_norm)?;
                (norm <= cfg.epsilon, norm)
            }
            ConvergenceMode::SimultaneousLocal => {
                let converged = check_convergence(ep, local_norm, cfg.epsilon, cfg.convergence)?;
                (converged, ep.all_reduce_max(local_norm)?)
            }
        };
        report.residual_history.push(norm);
        report.iterations = k + 1;
        report.residual_final = norm;
        if converged {
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
    report.comm_time_s = ep.comm_time().as_secs_f64();
    report.total_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}

pub(crate) fn inverse(d: f64, row: usize) -> Result<f64, SolverError> {
    if d == 0.0 || !d.is_finite() {
        return Err(SparseError::SingularDiagonal { row }.into());
    }
    Ok(1.0 / d)
}

/// Gathered result of a distributed solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedSolution {
    pub u: Vec<f64>,
    pub report: SolveReport,
    pub rank_stats: Vec<CommStats>,
}

/// Picks the error that caused a failed run: a rank that merely saw its
/// peer hang up is reported only if nothing else went wrong.
fn root_cause(errors: Vec<SolverError>) -> SolverError {
    let is_echo = |e: &SolverError| matches!(e, SolverError::Fabric(FabricError::Disconnected { .. }));
    let first_real = errors.iter().position(|e| !is_echo(e));
    errors.into_iter().nth(first_real.unwrap_or(0)).expect("at least one error")
}

fn merge_reports(variant: Variant, per_rank: &[(SolveReport, CommStats)]) -> Result<SolveReport, SolverError> {
    let first = &per_rank[0].0;
    for (k, (r, _)) in per_rank.iter().enumerate() {
        if r.iterations != first.iterations || r.converged != first.converged || r.diverged != first.diverged {
            return Err(SolverError::RankMismatch(format!(
                "rank {k} stopped after {} iterations, rank 0 after {}",
                r.iterations, first.iterations
            )));
        }
    }
    let mut report = first.clone();
    report.variant = variant;
    report.n_ranks = per_rank.len();
    report.comm_time_s = per_rank.iter().map(|(r, _)| r.comm_time_s).fold(0.0, f64::max);
    report.total_time_s = per_rank.iter().map(|(r, _)| r.total_time_s).fold(0.0, f64::max);
    report.bytes_exchanged = per_rank.iter().map(|(_, s)| s.bytes_sent).sum();
    Ok(report)
}

/// Runs `variant` on a bundle with one rank per payload and gathers the
/// global solution.
///
/// Band-row bundles run either band-row variant; dependency lists are built
/// on the fly when a naive bundle is solved with the sparsity variant.
pub fn solve_bundle(
    bundle: &PartitionBundle,
    variant: Variant,
    cfg: &JacobiConfig,
) -> Result<DistributedSolution, SolverError> {
    cfg.validate()?;
    let p = bundle.n_ranks();
    let n = bundle.global_n;
    let u0 = cfg.initial_iterate(n)?;
    let timeout = timeout_from_env();

    let results = match variant {
        Variant::BandRow | Variant::BandRowOptimized => {
            let parts = bundle.band_rows().ok_or_else(|| {
                SolverError::Unsupported(format!("{variant} needs a band-row bundle, got {}", bundle.strategy))
            })?;
            let deps = match (variant, bundle.dependencies()) {
                (Variant::BandRow, _) => None,
                (_, Some(d)) => Some(d.into_iter().cloned().collect::<Vec<_>>()),
                (_, None) => {
                    let owned: Vec<BandRowPartition> = parts.iter().map(|&p| p.clone()).collect();
                    Some(build_dependency_lists(&owned))
                }
            };
            spawn_world_with(p, timeout, |ep| {
                let part = parts[ep.rank()];
                let local_cfg = JacobiConfig {
                    initial_guess: Some(u0[part.range()].to_vec()),
                    ..cfg.clone()
                };
                match &deps {
                    None => jacobi_bandrow_naive(part, ep, &local_cfg),
                    Some(d) => jacobi_bandrow_sparsity(part, &d[ep.rank()], ep, &local_cfg),
                }
            })?
        }
        Variant::Substructuring => {
            let subs = bundle.substructures().ok_or_else(|| {
                SolverError::Unsupported(format!("JSS needs a substructuring bundle, got {}", bundle.strategy))
            })?;
            spawn_world_with(p, timeout, |ep| {
                let sub = subs[ep.rank()];
                let local_cfg = JacobiConfig {
                    initial_guess: Some(sub.local_to_global.iter().map(|&g| u0[g]).collect()),
                    ..cfg.clone()
                };
                jacobi_substructuring(sub, ep, &local_cfg)
            })?
        }
        Variant::Sequential => {
            return Err(SolverError::Unsupported("the sequential solver does not take a bundle".into()))
        }
    };

    let mut per_rank = Vec::with_capacity(p);
    let mut errors = Vec::new();
    for (res, stats) in results {
        match res {
            Ok((u, report)) => per_rank.push((u, report, stats)),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(root_cause(errors));
    }

    let mut u = vec![0.0; n];
    for (rank, (local, _, _)) in per_rank.iter().enumerate() {
        match &bundle.ranks[rank] {
            RankData::BandRow { part, .. } => u[part.range()].copy_from_slice(local),
            RankData::Substructure(sub) => {
                for (l, &g) in sub.local_to_global.iter().enumerate() {
                    if sub.owns(l) {
                        u[g] = local[l];
                    }
                }
            }
        }
    }
    let reports: Vec<(SolveReport, CommStats)> = per_rank.into_iter().map(|(_, r, s)| (r, s)).collect();
    let report = merge_reports(variant, &reports)?;
    Ok(DistributedSolution {
        u,
        report,
        rank_stats: reports.into_iter().map(|(_, s)| s).collect(),
    })
}

/// The variant a bundle was prepared for.
pub fn default_variant(bundle: &PartitionBundle) -> Variant {
    match bundle.strategy {
        crate::mmio::Strategy::BandrowNaive => Variant::BandRow,
        crate::mmio::Strategy::BandrowSparsity => Variant::BandRowOptimized,
        crate::mmio::Strategy::Substructuring => Variant::Substructuring,
    }
}

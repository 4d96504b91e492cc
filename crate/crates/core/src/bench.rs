//! Benchmark harness: runs variants over rank counts, averages timings over
//! repeats and reports parallel efficiency against the one-rank run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::mmio::PartitionBundle;
use crate::partition::{
    band_row_split, build_dependency_lists, substructure_split, ElementConnectivity, PartitionError,
};
use crate::report::{SolveReport, Variant};
use crate::solver::{solve_bundle, SolverError};
use crate::sparse::{CsrMatrix, JacobiConfig};

pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{variant} on {ranks} ranks {reason}")]
    Failed { variant: Variant, ranks: usize, reason: String },
}

/// `t_seq / (p * t_p)` as a percentage.
pub fn efficiency_pct(t_seq: f64, p: usize, t_p: f64) -> f64 {
    t_seq / (p as f64 * t_p) * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub variants: Vec<Variant>,
    pub ranks: Vec<usize>,
    pub cfg: JacobiConfig,
    pub repeats: usize,
}

impl BenchPlan {
    pub fn new(variants: Vec<Variant>, ranks: Vec<usize>, cfg: JacobiConfig) -> Self {
        BenchPlan {
            variants,
            ranks,
            cfg,
            repeats: DEFAULT_REPEATS,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.variants.is_empty() {
            return Err(BenchError::InvalidPlan("no variants".into()));
        }
        if let Some(v) = self.variants.iter().find(|v| **v == Variant::Sequential) {
            return Err(BenchError::InvalidPlan(format!("{v} is not a distributed variant")));
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(BenchError::InvalidPlan("rank counts must be >= 1".into()));
        }
        if self.repeats == 0 {
            return Err(BenchError::InvalidPlan("repeats must be >= 1".into()));
        }
        self.cfg.validate().map_err(SolverError::from)?;
        Ok(())
    }
}

/// Splits a system the way `variant` expects it.
pub fn prepare_bundle(
    a: &CsrMatrix,
    b: &[f64],
    elements: Option<&ElementConnectivity>,
    variant: Variant,
    p: usize,
) -> Result<PartitionBundle, BenchError> {
    Ok(match variant {
        Variant::BandRow => PartitionBundle::band_row(band_row_split(a, b, p)?, None),
        Variant::BandRowOptimized => {
            let parts = band_row_split(a, b, p)?;
            let deps = build_dependency_lists(&parts);
            PartitionBundle::band_row(parts, Some(deps))
        }
        Variant::Substructuring => PartitionBundle::substructuring(substructure_split(a, b, p, elements)?),
        Variant::Sequential => return Err(BenchError::InvalidPlan("SEQ takes no bundle".into())),
    })
}

/// Runs the plan and returns one report per (variant, p), in plan order,
/// with times averaged over the repeats and efficiency filled in.
///
/// The one-rank run of each variant is the efficiency baseline; it is run
/// even when 1 is not among the requested rank counts, but then not reported.
pub fn run_plan(
    a: &CsrMatrix,
    b: &[f64],
    elements: Option<&ElementConnectivity>,
    plan: &BenchPlan,
) -> Result<Vec<SolveReport>, BenchError> {
    plan.validate()?;
    let mut out = Vec::new();
    for &variant in &plan.variants {
        let mut ranks = plan.ranks.clone();
        let baseline_only = !ranks.contains(&1);
        if baseline_only {
            ranks.insert(0, 1);
        }
        let mut reports = Vec::with_capacity(ranks.len());
        for &p in &ranks {
            let bundle = prepare_bundle(a, b, elements, variant, p)?;
            let mut mean: Option<SolveReport> = None;
            for _ in 0..plan.repeats {
                let sol = solve_bundle(&bundle, variant, &plan.cfg)?;
                let rep = sol.report;
                if rep.diverged || !rep.converged {
                    return Err(BenchError::Failed {
                        variant,
                        ranks: p,
                        reason: if rep.diverged {
                            "diverged".into()
                        } else {
                            format!("did not converge in {} iterations", rep.iterations)
                        },
                    });
                }
                match &mut mean {
                    None => mean = Some(rep),
                    Some(m) => {
                        m.comm_time_s += rep.comm_time_s;
                        m.total_time_s += rep.total_time_s;
                    }
                }
            }
            let mut m = mean.expect("repeats >= 1");
            m.comm_time_s /= plan.repeats as f64;
            m.total_time_s /= plan.repeats as f64;
            reports.push(m);
        }
        fill_efficiency(&mut reports);
        out.extend(reports.into_iter().filter(|r| !(baseline_only && r.n_ranks == 1)));
    }
    Ok(out)
}

/// Sets `efficiency_pct` of each report from the one-rank report of the same variant.
pub fn fill_efficiency(reports: &mut [SolveReport]) {
    let t_seq: BTreeMap<Variant, f64> = reports
        .iter()
        .filter(|r| r.n_ranks == 1)
        .map(|r| (r.variant, r.total_time_s))
        .collect();
    for r in reports {
        r.efficiency_pct = t_seq
            .get(&r.variant)
            .map(|&t| if r.n_ranks == 1 { 100.0 } else { efficiency_pct(t, r.n_ranks, r.total_time_s) });
    }
}

/// Text table with one row per rank count and, for each variant, the
/// iteration count, communication time, total time and efficiency.
pub fn format_table(reports: &[SolveReport]) -> String {
    let mut variants: Vec<Variant> = Vec::new();
    let mut ranks: Vec<usize> = Vec::new();
    for r in reports {
        if !variants.contains(&r.variant) {
            variants.push(r.variant);
        }
        if !ranks.contains(&r.n_ranks) {
            ranks.push(r.n_ranks);
        }
    }
    ranks.sort_unstable();
    let mut s = format!("{:>4}", "#p");
    for v in &variants {
        let _ = write!(
            s,
            " | {:>8} {:>10} {:>10} {:>8}",
            format!("{v} #iter"),
            "comm(s)",
            "total(s)",
            "eff(%)"
        );
    }
    s.push('\n');
    for p in ranks {
        let _ = write!(s, "{p:>4}");
        for &v in &variants {
            match reports.iter().find(|r| r.variant == v && r.n_ranks == p) {
                Some(r) => {
                    let eff = r.efficiency_pct.map_or("-".to_string(), |e| format!("{e:.2}"));
                    let _ = write!(
                        s,
                        " | {:>8} {:>10.4} {:>10.4} {:>8}",
                        r.iterations, r.comm_time_s, r.total_time_s, eff
                    );
                }
                None => {
                    let _ = write!(s, " | {:>8} {:>10} {:>10} {:>8}", "-", "-", "-", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testgen::{gen_laplace, Discretization, MeshSpec};

    #[test]
    fn efficiency_examples() {
        assert!((efficiency_pct(10.9, 8, 3.1) - 43.95).abs() < 0.01);
        assert_eq!(efficiency_pct(2.5, 1, 2.5), 100.0);
    }

    #[test]
    fn small_plan() {
        let sys = gen_laplace(MeshSpec::new(5, Discretization::Fd7)).unwrap();
        let mut plan = BenchPlan::new(
            vec![Variant::BandRow, Variant::BandRowOptimized, Variant::Substructuring],
            vec![2, 3],
            JacobiConfig::default(),
        );
        plan.repeats = 2;
        let reports = run_plan(&sys.matrix, &sys.rhs, None, &plan).unwrap();
        assert_eq!(reports.len(), 6);
        assert!(reports.iter().all(|r| r.converged && r.efficiency_pct.is_some()));
        let table = format_table(&reports);
        assert_eq!(table.lines().count(), 3);
        assert!(table.contains("JBO #iter"));
    }

    #[test]
    fn invalid_plans() {
        let cfg = JacobiConfig::default();
        assert!(BenchPlan::new(vec![], vec![1], cfg.clone()).validate().is_err());
        assert!(BenchPlan::new(vec![Variant::BandRow], vec![0], cfg.clone()).validate().is_err());
        assert!(BenchPlan::new(vec![Variant::Sequential], vec![1], cfg).validate().is_err());
    }
}

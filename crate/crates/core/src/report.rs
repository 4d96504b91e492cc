use serde::{Deserialize, Serialize};

/// Which Jacobi implementation produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "SEQ")]
    Sequential,
    /// Naive band-row splitting: full-vector gather every iteration.
    #[serde(rename = "JB")]
    BandRow,
    /// Band-row splitting exchanging only the sparsity-pattern dependencies.
    #[serde(rename = "JBO")]
    BandRowOptimized,
    /// Substructuring with interface assembly.
    #[serde(rename = "JSS")]
    Substructuring,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Sequential => "SEQ",
            Variant::BandRow => "JB",
            Variant::BandRowOptimized => "JBO",
            Variant::Substructuring => "JSS",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SEQ" => Ok(Variant::Sequential),
            "JB" => Ok(Variant::BandRow),
            "JBO" => Ok(Variant::BandRowOptimized),
            "JSS" => Ok(Variant::Substructuring),
            _ => Err(format!("unknown variant '{s}' (expected JB, JBO or JSS)")),
        }
    }
}

/// Outcome of one solve.
///
/// For distributed runs the times are the maximum over ranks and
/// `bytes_exchanged` is the sum over ranks of point-to-point payload bytes,
/// excluding convergence reductions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub variant: Variant,
    pub n_ranks: usize,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    pub comm_time_s: f64,
    pub total_time_s: f64,
    pub bytes_exchanged: u64,
    pub residual_final: f64,
    pub efficiency_pct: Option<f64>,
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

impl SolveReport {
    pub fn new(variant: Variant, n_ranks: usize) -> Self {
        SolveReport {
            variant,
            n_ranks,
            iterations: 0,
            converged: false,
            diverged: false,
            comm_time_s: 0.0,
            total_time_s: 0.0,
            bytes_exchanged: 0,
            residual_final: f64::NAN,
            efficiency_pct: None,
            residual_history: Vec::new(),
        }
    }
}

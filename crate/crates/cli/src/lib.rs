//! Command implementations behind the `jacobi-split` binary.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{rngs::StdRng, Rng, SeedableRng};
use thiserror::Error;

use jacobi_split::bench::{format_table, run_plan, BenchError, BenchPlan, DEFAULT_REPEATS};
use jacobi_split::mmio::{
    read_elements, read_matrix_market, read_node_partition, read_partition_bundle, read_vector, write_elements,
    write_matrix_market, write_partition_bundle, write_vector, MmioError, PartitionBundle, Strategy,
};
use jacobi_split::partition::{
    band_row_split, band_row_split_sizes, build_dependency_lists, check_interface_alignment, check_partial_sums,
    substructure_split, substructures_from_node_parts, ElementConnectivity, PartitionError,
};
use jacobi_split::solver::{default_variant, solve_bundle, SolverError};
use jacobi_split::sparse::{ConvergenceMode, CsrMatrix, JacobiConfig, DEFAULT_EPSILON, DEFAULT_MAX_ITERATIONS};
use jacobi_split::testgen::{gen_crafted, gen_laplace, Discretization, GenError, MeshSpec};
use jacobi_split::{SolveReport, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Mmio(#[from] MmioError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

#[derive(Debug, Parser)]
#[command(name = "jacobi-split", version, about = "Distributed synchronous Jacobi solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Laplace system or a small named test matrix.
    Gen(GenArgs),
    /// Split a system into a per-rank partition bundle.
    Partition(PartitionArgs),
    /// Solve a partition bundle.
    Solve(SolveArgs),
    /// Time variants over several rank counts.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Discretization: fd7 or hex-fem.
    #[arg(long, required_unless_present = "crafted")]
    pub disc: Option<Discretization>,
    /// Grid nodes per axis, boundary included.
    #[arg(long, required_unless_present = "crafted")]
    pub m: Option<usize>,
    /// A named matrix: fig4-example, fig5-10x10, fig5-10x10-dominant, divergent-2x2 or tridiag-<n>.
    #[arg(long, conflicts_with_all = ["disc", "m"])]
    pub crafted: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub rhs: PathBuf,
    /// bandrow, bandrow-op or substructuring.
    #[arg(long)]
    pub strategy: Strategy,
    #[arg(long)]
    pub ranks: Option<usize>,
    /// Explicit band heights for band-row strategies, e.g. 3,3,4.
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<usize>>,
    /// Node-to-part file for substructuring.
    #[arg(long, conflicts_with = "elements")]
    pub parts: Option<PathBuf>,
    /// Element file for element-based substructuring.
    #[arg(long)]
    pub elements: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,
    /// global-norm or simultaneous-local.
    #[arg(long, default_value = "global-norm")]
    pub conv_mode: ConvergenceMode,
    /// Start from a random iterate drawn from [-1, 1] with this seed instead of zero.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl SolverArgs {
    pub fn config(&self, n: usize) -> JacobiConfig {
        let mut cfg = JacobiConfig::new(self.epsilon, self.max_iters).with_mode(self.conv_mode);
        if let Some(seed) = self.seed {
            let mut rng = StdRng::seed_from_u64(seed);
            cfg.initial_guess = Some((0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect());
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// JB, JBO or JSS; defaults to the variant the bundle was made for.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Exit 0 even if the solve did not converge.
    #[arg(long)]
    pub allow_nonconverged: bool,
    /// Append the report to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the gathered solution as a vector file.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, required_unless_present = "disc", requires = "rhs")]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub rhs: Option<PathBuf>,
    #[arg(long)]
    pub elements: Option<PathBuf>,
    #[arg(long, conflicts_with = "matrix", requires = "m")]
    pub disc: Option<Discretization>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "JB,JBO,JSS")]
    pub variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args, out),
        Command::Partition(args) => cmd_partition(&args, out),
        Command::Solve(args) => cmd_solve(&args, out),
        Command::Bench(args) => cmd_bench(&args, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let (matrix, rhs, elements) = match (&args.crafted, args.disc, args.m) {
        (Some(name), _, _) => {
            let (a, b) = gen_crafted(name)?;
            (a, b, None)
        }
        (None, Some(disc), Some(m)) => {
            let sys = gen_laplace(MeshSpec::new(m, disc))?;
            (sys.matrix, sys.rhs, sys.elements)
        }
        _ => return Err(CliError::Usage("give --crafted, or both --disc and --m".into())),
    };
    write_matrix_market(&matrix, args.out.join("matrix.mtx"))?;
    write_vector(&rhs, args.out.join("rhs.vec"))?;
    if let Some(conn) = &elements {
        write_elements(conn, args.out.join("elements.txt"))?;
    }
    write_out(
        out,
        &format!(
            "wrote {} ({} rows, {} nonzeros, max {} per row){}\n",
            args.out.display(),
            matrix.n_rows(),
            matrix.nnz(),
            matrix.max_row_nnz(),
            if elements.is_some() { " with elements" } else { "" }
        ),
    )?;
    Ok(EXIT_OK)
}

fn load_system(matrix: &Path, rhs: &Path) -> Result<(CsrMatrix, Vec<f64>), CliError> {
    let a = read_matrix_market(matrix)?;
    let b = read_vector(rhs)?;
    if b.len() != a.n_rows() {
        return Err(CliError::Usage(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            a.n_rows()
        )));
    }
    Ok((a, b))
}

fn load_elements(path: Option<&PathBuf>, n: usize) -> Result<Option<ElementConnectivity>, CliError> {
    path.map(|p| read_elements(p, n)).transpose().map_err(Into::into)
}

pub fn build_bundle(args: &PartitionArgs) -> Result<PartitionBundle, CliError> {
    let (a, b) = load_system(&args.matrix, &args.rhs)?;
    match args.strategy {
        Strategy::BandrowNaive | Strategy::BandrowSparsity => {
            if args.parts.is_some() || args.elements.is_some() {
                return Err(CliError::Usage("--parts and --elements apply to substructuring only".into()));
            }
            let parts = match (&args.bands, args.ranks) {
                (Some(sizes), ranks) => {
                    if ranks.is_some_and(|p| p != sizes.len()) {
                        return Err(CliError::Usage("--ranks disagrees with the number of --bands".into()));
                    }
                    band_row_split_sizes(&a, &b, sizes)?
                }
                (None, Some(p)) => band_row_split(&a, &b, p)?,
                (None, None) => return Err(CliError::Usage("give --ranks or --bands".into())),
            };
            let deps = (args.strategy == Strategy::BandrowSparsity).then(|| build_dependency_lists(&parts));
            Ok(PartitionBundle::band_row(parts, deps))
        }
        Strategy::Substructuring => {
            if args.bands.is_some() {
                return Err(CliError::Usage("--bands applies to band-row strategies only".into()));
            }
            let subs = match &args.parts {
                Some(path) => {
                    let parts = read_node_partition(path)?;
                    let p = parts.iter().max().map_or(1, |m| m + 1);
                    if args.ranks.is_some_and(|r| r != p) {
                        return Err(CliError::Usage(format!("--ranks disagrees with the {p} parts in the file")));
                    }
                    substructures_from_node_parts(&a, &b, &parts, p)?
                }
                None => {
                    let p = args.ranks.ok_or_else(|| CliError::Usage("give --ranks".into()))?;
                    let elements = load_elements(args.elements.as_ref(), a.n_rows())?;
                    substructure_split(&a, &b, p, elements.as_ref())?
                }
            };
            check_partial_sums(&a, &b, &subs)?;
            check_interface_alignment(&subs)?;
            Ok(PartitionBundle::substructuring(subs))
        }
    }
}

pub fn cmd_partition(args: &PartitionArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let bundle = build_bundle(args)?;
    write_partition_bundle(&bundle, &args.out)?;
    let mut text = format!(
        "wrote {} bundle for {} ranks to {}\n",
        bundle.strategy,
        bundle.n_ranks(),
        args.out.display()
    );
    if let Some(deps) = bundle.dependencies() {
        for d in deps {
            for nb in &d.neighbors {
                text.push_str(&format!(
                    "rank {}: recv {:?} from rank {}, send {:?}\n",
                    d.rank + 1,
                    one_based(&nb.recv),
                    nb.rank + 1,
                    one_based(&nb.send)
                ));
            }
        }
    }
    write_out(out, &text)?;
    Ok(EXIT_OK)
}

fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|x| x + 1).collect()
}

pub fn exit_code(report: &SolveReport, allow_nonconverged: bool) -> i32 {
    match (report.converged, report.diverged, allow_nonconverged) {
        (true, _, _) | (_, _, true) => EXIT_OK,
        (false, true, false) => EXIT_DIVERGED,
        (false, false, false) => EXIT_NOT_CONVERGED,
    }
}

fn describe(report: &SolveReport) -> String {
    let status = if report.converged {
        "converged"
    } else if report.diverged {
        "diverged"
    } else {
        "not converged"
    };
    format!(
        "{} on {} ranks: {status} after {} iterations, residual {:.3e}, comm {:.6} s, total {:.6} s, {} bytes exchanged\n",
        report.variant,
        report.n_ranks,
        report.iterations,
        report.residual_final,
        report.comm_time_s,
        report.total_time_s,
        report.bytes_exchanged
    )
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let bundle = read_partition_bundle(&args.bundle)?;
    let variant = args.variant.unwrap_or_else(|| default_variant(&bundle));
    let cfg = args.solver.config(bundle.global_n);
    let sol = solve_bundle(&bundle, variant, &cfg)?;
    write_out(out, &describe(&sol.report))?;
    if let Some(path) = &args.csv {
        append_reports_csv(path, std::slice::from_ref(&sol.report))?;
    }
    if let Some(path) = &args.solution {
        write_vector(&sol.u, path)?;
    }
    Ok(exit_code(&sol.report, args.allow_nonconverged))
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (a, b, elements) = match (&args.matrix, &args.rhs, args.disc, args.m) {
        (Some(matrix), Some(rhs), _, _) => {
            let (a, b) = load_system(matrix, rhs)?;
            let elements = load_elements(args.elements.as_ref(), a.n_rows())?;
            (a, b, elements)
        }
        (None, _, Some(disc), Some(m)) => {
            let sys = gen_laplace(MeshSpec::new(m, disc))?;
            (sys.matrix, sys.rhs, sys.elements)
        }
        _ => return Err(CliError::Usage("give --matrix and --rhs, or --disc and --m".into())),
    };
    let mut plan = BenchPlan::new(args.variants.clone(), args.ranks.clone(), args.solver.config(a.n_rows()));
    plan.repeats = args.repeats;
    let reports = run_plan(&a, &b, elements.as_ref(), &plan)?;
    write_out(out, &format_table(&reports))?;
    if let Some(path) = &args.csv {
        write_reports_csv(path, &reports)?;
    }
    Ok(EXIT_OK)
}

pub fn write_reports_csv_to<W: Write>(w: W, reports: &[SolveReport]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in reports {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(io_err(Path::new("<csv>")))
}

pub fn write_reports_csv(path: &Path, reports: &[SolveReport]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_reports_csv_to(file, reports)
}

/// Appends to an existing CSV file, writing the header only for a new one.
pub fn append_reports_csv(path: &Path, reports: &[SolveReport]) -> Result<(), CliError> {
    let exists = path.metadata().is_ok_and(|m| m.len() > 0);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut wtr = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for r in reports {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(io_err(path))
}

pub fn read_reports_csv_from<R: io::Read>(r: R) -> Result<Vec<SolveReport>, CliError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<Vec<SolveReport>, _>>()
        .map_err(Into::into)
}

pub fn read_reports_csv(path: &Path) -> Result<Vec<SolveReport>, CliError> {
    read_reports_csv_from(fs::File::open(path).map_err(io_err(path))?)
}

//! `apgm`: table generation, single solves, MPC condensation and benchmarks.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apgm::bench_stats::{run_suite, write_envelope_csv, SuiteConfig};
use apgm::dual_pgm::{QpProblemFile, SolveResultFile};
use apgm::mpc_condense::{condense, MpcSpecFile};
use apgm::param_table::DEFAULT_TABLE_LENGTH;
use apgm::precondition::{recover, transform};
use apgm::{solve, Error, LookupTable, SolverOptions, StopReason};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "apgm", version, about = "Accelerated dual proximal gradient QP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a momentum-parameter table.
    GenTable(GenTableArgs),
    /// Solve a QP given as JSON.
    Solve(SolveArgs),
    /// Condense an MPC spec into a QP for one initial state.
    Condense(CondenseArgs),
    /// Run the random-instance benchmark suite.
    Bench(BenchArgs),
    /// Tabulate the rate envelope alpha^alpha / (p + alpha - 1)^alpha.
    Envelope(EnvelopeArgs),
}

#[derive(Debug, Args)]
struct TableDir {
    /// Directory caching `alpha<N>.tbl` tables.
    #[arg(long, env = "APGM_TABLE_DIR")]
    table_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenTableArgs {
    /// Order of the momentum recurrence (>= 2).
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    alpha: u32,
    /// Number of roots to store.
    #[arg(long, default_value_t = DEFAULT_TABLE_LENGTH, value_parser = positive_usize)]
    length: usize,
    /// Output file; defaults to `alpha<N>.tbl` in the table directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `p,tau` CSV instead of the binary format.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    tables: TableDir,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Problem JSON with fields n_v, n_c, H, G, A, B.
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(2..))]
    alpha: u32,
    /// Stop when ||xi^p - xi^(p-1)||_2 falls to this value.
    #[arg(long, default_value_t = 1e-3, value_parser = positive_f64)]
    stop_tol: f64,
    #[arg(long, default_value_t = 100_000, value_parser = positive_usize)]
    max_iters: usize,
    /// Solve in Cholesky-transformed coordinates.
    #[arg(long)]
    precondition: bool,
    /// Include per-iteration primal iterates and dual objective values.
    #[arg(long)]
    history: bool,
    /// Result JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tables: TableDir,
}

#[derive(Debug, Args)]
struct CondenseArgs {
    /// MPC spec JSON with fields A, B, F, Gc, Q, R, N and optional P, Phi.
    #[arg(long)]
    mpc: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    x0: Vec<f64>,
    /// Problem JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// System sizes n = m.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8", value_parser = positive_usize)]
    scales: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,20", value_parser = clap::value_parser!(u32).range(2..))]
    alphas: Vec<u32>,
    /// Instances per scale.
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "bench-out")]
    outdir: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    jobs: usize,
    /// Prediction horizon N.
    #[arg(long, default_value_t = 5, value_parser = positive_usize)]
    horizon: usize,
    #[arg(long, default_value_t = 1e-3, value_parser = positive_f64)]
    stop_tol: f64,
    #[arg(long, default_value_t = 100_000, value_parser = positive_usize)]
    max_iters: usize,
    #[arg(long)]
    precondition: bool,
    /// Add terminal rows Phi = F on the last predicted state.
    #[arg(long)]
    terminal_rows: bool,
    /// Skip reference solutions, error profiles and bound checks.
    #[arg(long)]
    no_reference: bool,
    /// Largest p written to envelope.csv.
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    envelope_pmax: usize,
}

#[derive(Debug, Args)]
struct EnvelopeArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "2,3,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20",
        value_parser = clap::value_parser!(u32).range(2..)
    )]
    alphas: Vec<u32>,
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    pmax: usize,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
    NotConverged(StopReason),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(Error::Json(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::AlphaMismatch { .. } => EXIT_USAGE,
        Error::DimensionMismatch { .. }
        | Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::IndexOutOfRange { .. }
        | Error::SlaterViolation { .. }
        | Error::TableFormat(_)
        | Error::Schema { .. }
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => EXIT_DATA,
        Error::DegenerateLipschitz
        | Error::RootFinding { .. }
        | Error::DareNotConverged { .. }
        | Error::BudgetExceeded { .. }
        | Error::Infeasible
        | Error::Generation { .. }
        | Error::Statistics(_) => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::GenTable(a) => gen_table(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Condense(a) => condense_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Envelope(a) => envelope(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::NotConverged(reason)) => {
            eprintln!("solver stopped without converging: {reason}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}

fn table_path(dir: &Path, alpha: u32) -> PathBuf {
    dir.join(format!("alpha{alpha}.tbl"))
}

/// Reads a cached table holding at least `length` roots, or builds and caches one.
fn load_table(dir: Option<&Path>, alpha: u32, length: usize) -> Result<LookupTable, Failure> {
    let Some(dir) = dir else {
        return Ok(LookupTable::build(alpha, length)?);
    };
    let path = table_path(dir, alpha);
    if let Ok(file) = fs::File::open(&path) {
        match LookupTable::read_binary(io::BufReader::new(file)) {
            Ok(t) if t.alpha() == alpha && t.len() >= length => return Ok(t),
            Ok(_) => {}
            Err(e) => eprintln!("warning: ignoring cached table {}: {e}", path.display()),
        }
    }
    let table = LookupTable::build(alpha, length)?;
    fs::create_dir_all(dir)?;
    table.write_binary(io::BufWriter::new(fs::File::create(&path)?))?;
    Ok(table)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn gen_table(a: GenTableArgs) -> Result<(), Failure> {
    let out = match (&a.out, &a.tables.table_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => {
            fs::create_dir_all(dir)?;
            table_path(dir, a.alpha)
        }
        (None, None) => return Err(Failure::Usage("either --out or --table-dir (APGM_TABLE_DIR) is required".into())),
    };
    let table = LookupTable::build(a.alpha, a.length)?;
    let file = io::BufWriter::new(fs::File::create(&out)?);
    if a.csv {
        table.write_csv(file)?;
    } else {
        table.write_binary(file)?;
    }
    let check = table.check();
    println!("alpha {} length {} -> {}", a.alpha, table.len(), out.display());
    println!("max relative residual: {:e}", check.max_relative_residual);
    println!("min lower-bound slack: {:e}", check.min_lower_bound_slack);
    println!("strictly increasing: {}", check.strictly_increasing);
    if !check.passed() {
        return Err(Error::RootFinding {
            alpha: a.alpha,
            tau_prev: f64::NAN,
            reason: "table failed its invariant check".into(),
        }
        .into());
    }
    Ok(())
}

fn solve_cmd(a: SolveArgs) -> Result<(), Failure> {
    let file: QpProblemFile = serde_json::from_reader(io::BufReader::new(fs::File::open(&a.problem)?))?;
    let problem = file.into_problem()?;
    let length = (a.max_iters + 1).min(DEFAULT_TABLE_LENGTH);
    let table = load_table(a.tables.table_dir.as_deref(), a.alpha, length)?;
    let opts = SolverOptions {
        alpha: a.alpha,
        stop_tol: a.stop_tol,
        max_iters: a.max_iters,
        record_history: a.history,
        mu0: None,
    };
    let result = if a.precondition {
        let (tp, factor) = transform(&problem)?;
        let mut r = solve(&tp, &table, &opts)?;
        r.xi_star = recover(&factor, &r.xi_star)?;
        if let Some(h) = r.history.as_mut() {
            h.primal = h.primal.iter().map(|psi| recover(&factor, psi)).collect::<apgm::Result<Vec<DVector<f64>>>>()?;
        }
        r
    } else {
        solve(&problem, &table, &opts)?
    };
    let mut json = serde_json::to_vec_pretty(&SolveResultFile::from(&result))?;
    json.push(b'\n');
    write_output(a.out.as_deref(), &json)?;
    eprintln!("{} after {} iterations ({:.3e} s)", result.stop_reason, result.iterations, result.elapsed_s);
    if let Some(d) = &result.diagnostics {
        eprintln!("{d}");
    }
    if result.converged() {
        Ok(())
    } else {
        Err(Failure::NotConverged(result.stop_reason))
    }
}

#[derive(Serialize)]
struct CondensedFile {
    #[serde(flatten)]
    problem: QpProblemFile,
    constant: f64,
}

fn condense_cmd(a: CondenseArgs) -> Result<(), Failure> {
    let file: MpcSpecFile = serde_json::from_reader(io::BufReader::new(fs::File::open(&a.mpc)?))?;
    let (spec, computed) = file.into_spec()?;
    let qp = condense(&spec, &DVector::from_vec(a.x0))?;
    if computed {
        eprintln!("terminal weight P computed from the discrete algebraic Riccati equation");
    }
    eprintln!("vars/cons: {}/{}", qp.problem.n_v(), qp.problem.n_c());
    let out = CondensedFile {
        problem: QpProblemFile::from_problem(&qp.problem),
        constant: qp.constant,
    };
    let mut json = serde_json::to_vec_pretty(&out)?;
    json.push(b'\n');
    write_output(a.out.as_deref(), &json)
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let cfg = SuiteConfig {
        scales: a.scales,
        alphas: a.alphas.clone(),
        instances_per_scale: a.count,
        seed: a.seed,
        horizon: a.horizon,
        stop_tol: a.stop_tol,
        max_iters: a.max_iters,
        precondition: a.precondition,
        reference: !a.no_reference,
        jobs: a.jobs,
        terminal_rows: a.terminal_rows,
    };
    let report = run_suite(&cfg)?;
    report.write_csvs(&a.outdir, &a.alphas, a.envelope_pmax)?;

    println!("{:>5} {:>5} {:>10} {:>12}", "scale", "alpha", "ave_iter", "ave_time_s");
    for g in &report.aggregates {
        println!("{:>5} {:>5} {:>10.2} {:>12.3e}", g.scale, g.alpha, g.ave_iter, g.ave_time_s);
    }
    for t in report.ttests.iter().filter(|t| t.metric == "iterations") {
        match &t.result {
            Some(r) => println!("scale {} alpha {} vs {}: t = {:.4} (M = {})", t.scale, t.baseline_alpha, t.alpha, r.t, r.m),
            None => println!("scale {} alpha {} vs {}: t undefined (zero variance)", t.scale, t.baseline_alpha, t.alpha),
        }
    }
    println!("wrote {}", a.outdir.display());
    Ok(())
}

fn envelope(a: EnvelopeArgs) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_envelope_csv(&a.alphas, a.pmax, &mut buf)?;
    write_output(a.out.as_deref(), &buf)
}

//! Command line interface.
//!
//! Exit codes: 0 success, 1 property or validation failure, 2 usage error,
//! 3 solver failure, 4 incomplete study.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    plot_csv, run_study, runs_csv, solve_benchmark, table_csv, table_markdown, DeltaRule, ErrorRecord, RunConfig,
    StudyResult, DEFAULT_EPS_LIST, DEFAULT_N_LIST,
};
use crate::check::{run_checks, CheckOptions, CheckReport};
use crate::error::Error;
use crate::linalg::{GmresSettings, PrecondKind};
use crate::mesh::{build_mesh, validate_mesh, Layout, MeshParams, DEFAULT_RHO};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_INCOMPLETE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "layerfem", version, about = "SDFEM on Shishkin meshes for convection-diffusion with layers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, validate and dump a Shishkin mesh as JSON.
    Mesh(MeshArgs),
    /// Solve the benchmark once and report its errors.
    Solve(SolveArgs),
    /// Sweep N and eps and tabulate errors and rates.
    Study(StudyArgs),
    /// Run the property suites.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Md,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecondArg {
    None,
    Jacobi,
    Ilu0,
}

impl From<PrecondArg> for PrecondKind {
    fn from(p: PrecondArg) -> Self {
        match p {
            PrecondArg::None => PrecondKind::None,
            PrecondArg::Jacobi => PrecondKind::Jacobi,
            PrecondArg::Ilu0 => PrecondKind::Ilu0,
        }
    }
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    s.parse::<Layout>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value = "triangular", value_parser = parse_layout)]
    pub layout: Layout,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// Output file for the mesh JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Problem, discretization and solver options shared by `solve` and `study`.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "triangular", value_parser = parse_layout)]
    pub layout: Layout,
    #[arg(long, default_value_t = 2.0)]
    pub mu0: f64,
    #[arg(long)]
    pub delta_s: Option<f64>,
    #[arg(long)]
    pub delta_x: Option<f64>,
    #[arg(long)]
    pub delta_y: Option<f64>,
    #[arg(long)]
    pub delta_xy: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 60)]
    pub restart: usize,
    #[arg(long, default_value_t = 200)]
    pub max_outer: usize,
    #[arg(long, value_enum, default_value_t = PrecondArg::Ilu0)]
    pub precond: PrecondArg,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "LAYERFEM_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Single worker thread and serial assembly. Results are bitwise
    /// identical either way; this only pins the schedule.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            beta: self.beta,
            rho: self.rho,
            mu0: self.mu0,
            delta: DeltaRule {
                s: self.delta_s,
                x: self.delta_x,
                y: self.delta_y,
                xy: self.delta_xy,
            },
            solver: GmresSettings {
                restart: self.restart,
                tol: self.tol,
                max_outer: self.max_outer,
            },
            precond: self.precond.into(),
            parallel_assembly: !self.deterministic,
        }
    }

    fn threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.jobs
        }
    }

    fn check(&self) -> Result<(), Error> {
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return Err(Error::InvalidParams(format!("mu0 must be positive (got {})", self.mu0)));
        }
        if !(self.tol > 0.0) || self.restart == 0 || self.max_outer == 0 {
            return Err(Error::SolverSettings(
                "need tol > 0, restart >= 1 and max-outer >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long)]
    pub eps: f64,
    #[command(flatten)]
    pub run: RunArgs,
    /// Output file for the record; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the assembled matrix in MatrixMarket format.
    #[arg(long)]
    pub dump_matrix: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Doubling chain of mesh sizes.
    #[arg(long = "N", value_delimiter = ',', default_values_t = DEFAULT_N_LIST)]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EPS_LIST)]
    pub eps_list: Vec<f64>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory receiving table.csv, table.md, plot.csv and runs.csv;
    /// without it the table is printed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run the coercivity suite with a stabilization parameter above its bound.
    #[arg(long, hide = true)]
    pub inject_delta_violation: bool,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged(_) | Error::ZeroPivot { .. } | Error::ZeroDiagonal { .. } => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Mesh(a) => cmd_mesh(a),
        Command::Solve(a) => with_pool(a.run.threads(), || cmd_solve(a)),
        Command::Study(a) => with_pool(a.run.threads(), || cmd_study(a)),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_pool<F>(threads: usize, f: F) -> Result<i32, Error>
where
    F: FnOnce() -> Result<i32, Error> + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start thread pool: {e}")))?;
    pool.install(f)
}

fn cmd_mesh(a: &MeshArgs) -> Result<i32, Error> {
    let params = MeshParams::new(a.n, a.eps).with_beta(a.beta).with_rho(a.rho);
    params.validate()?;
    let mesh = build_mesh(&params, a.layout)?;
    let report = validate_mesh(&mesh);
    if report.eps_assumption_violated {
        eprintln!(
            "warning: epsilon assumption violated (eps = {} > min(1/N, ln^-6 N)); the layer estimates do not apply",
            a.eps
        );
    }
    if report.capped_x || report.capped_y {
        eprintln!(
            "warning: transition point capped (lambda_x = {}, lambda_y = {})",
            mesh.transition.lambda_x, mesh.transition.lambda_y
        );
    }
    let json = serde_json::to_string(&mesh.to_json())?;
    emit(a.out.as_deref(), &json)?;
    eprintln!(
        "mesh: {} nodes, {} cells ({} triangles, {} quads), total area {}",
        mesh.node_count(),
        mesh.cells.len(),
        report.triangles,
        report.quads,
        report.total_area
    );
    if report.unresolved_coordinates > 0 {
        eprintln!(
            "note: {} grid lines coincide in floating point; cell widths are kept exactly",
            report.unresolved_coordinates
        );
    }
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        for f in &report.failures {
            eprintln!("validation failure: {f:?}");
        }
        Ok(EXIT_PROPERTY)
    }
}

fn record_output(rec: &ErrorRecord, format: Format) -> Result<String, Error> {
    Ok(match format {
        Format::Csv => runs_csv(std::slice::from_ref(rec))?,
        Format::Json => serde_json::to_string_pretty(rec)? + "\n",
        Format::Md => format!(
            "| layout | N | eps | e_eps | e_sd | iters | converged |\n|---|---:|---:|---:|---:|---:|---|\n\
             | {} | {} | {:e} | {:.3e} | {:.3e} | {} | {} |\n",
            rec.layout, rec.n, rec.eps, rec.e_eps, rec.e_sd, rec.stats.iterations, rec.stats.converged
        ),
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<i32, Error> {
    a.run.check()?;
    MeshParams::new(a.n, a.eps).with_beta(a.run.beta).with_rho(a.run.rho).validate()?;
    let cfg = a.run.config();
    let run = solve_benchmark(a.n, a.eps, a.run.layout, &cfg)?;
    if let Some(path) = &a.dump_matrix {
        let file = std::io::BufWriter::new(fs::File::create(path)?);
        run.system.matrix.write_matrix_market(file)?;
    }
    let parts = run.error_parts()?;
    let rec = ErrorRecord {
        layout: a.run.layout,
        n: a.n,
        eps: a.eps,
        mu0: cfg.mu0,
        e_eps: parts.energy_sq(a.eps, cfg.mu0).sqrt(),
        e_sd: parts.sd_sq(a.eps, cfg.mu0).sqrt(),
        parts,
        stats: run.stats,
    };
    emit(a.out.as_deref(), &record_output(&rec, a.run.format)?)?;
    if run.stats.converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: {}", Error::NotConverged(run.stats));
        Ok(EXIT_SOLVER)
    }
}

fn study_output(study: &StudyResult, format: Format) -> Result<String, Error> {
    Ok(match format {
        Format::Csv => table_csv(&study.table),
        Format::Md => table_markdown(&study.table),
        Format::Json => serde_json::to_string_pretty(&study.table)? + "\n",
    })
}

fn cmd_study(a: &StudyArgs) -> Result<i32, Error> {
    a.run.check()?;
    for &eps in &a.eps_list {
        MeshParams::new(6, eps).validate()?;
    }
    let study = run_study(&a.n, &a.eps_list, a.run.layout, &a.run.config())?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("table.csv"), table_csv(&study.table))?;
            fs::write(dir.join("table.md"), table_markdown(&study.table))?;
            fs::write(dir.join("plot.csv"), plot_csv(&study.table))?;
            fs::write(dir.join("runs.csv"), runs_csv(&study.records)?)?;
            if a.run.format == Format::Json {
                fs::write(dir.join("table.json"), serde_json::to_string_pretty(&study.table)?)?;
            }
        }
        None => emit(None, &study_output(&study, a.run.format)?)?,
    }
    for f in &study.failures {
        eprintln!("incomplete: N={} eps={:e}: {}", f.n, f.eps, f.reason);
    }
    Ok(if study.complete() { EXIT_OK } else { EXIT_INCOMPLETE })
}

fn check_markdown(report: &CheckReport) -> String {
    let mut out = String::from("| suite | passed | cases | worst | tolerance |\n|---|---|---:|---:|---:|\n");
    for s in &report.suites {
        out.push_str(&format!(
            "| {} | {} | {} | {:e} | {:e} |\n",
            s.name, s.passed, s.cases, s.worst, s.tolerance
        ));
    }
    out
}

fn cmd_check(a: &CheckArgs) -> Result<i32, Error> {
    let report = run_checks(&CheckOptions {
        seed: a.seed,
        inject_delta_violation: a.inject_delta_violation,
    })?;
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Md => check_markdown(&report),
        Format::Csv => {
            let mut out = String::from("suite,passed,cases,worst,tolerance\n");
            for s in &report.suites {
                out.push_str(&format!("{},{},{},{:e},{:e}\n", s.name, s.passed, s.cases, s.worst, s.tolerance));
            }
            out
        }
    };
    emit(a.out.as_deref(), &text)?;
    for s in report.suites.iter().filter(|s| !s.passed) {
        eprintln!("FAILED {}: {}", s.name, s.detail);
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_PROPERTY })
}

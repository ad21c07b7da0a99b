//! Discrete norms, supercloseness errors and convergence studies.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_with, basis_points, delta_for, AssemblyOptions, DiscreteSystem, Problem, StabilizationConfig,
};
use crate::error::{Error, Result};
use crate::fem::{shape_eval, CellGeometry, ElementKind};
use crate::linalg::{build_preconditioner, gmres, GmresSettings, PrecondKind, SolveStats};
use crate::mesh::{build_mesh, Layout, MeshParams, RegionTag, ShishkinMesh, DEFAULT_RHO};
use crate::problems::{BenchmarkProblem, ExactSolution};

/// Finite element function given by its nodal values on a mesh.
#[derive(Debug, Clone)]
pub struct FEFunction<'a> {
    pub mesh: &'a ShishkinMesh,
    pub coeffs: Vec<f64>,
}

impl<'a> FEFunction<'a> {
    pub fn new(mesh: &'a ShishkinMesh, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), mesh.node_count(), "one coefficient per node");
        Self { mesh, coeffs }
    }

    /// Value at a reference point of cell `cell`.
    pub fn eval_in_cell(&self, cell: usize, reference: [f64; 2]) -> f64 {
        let c = &self.mesh.cells[cell];
        let shape = shape_eval(c.kind.into(), reference);
        c.vertices()
            .iter()
            .zip(&shape.values)
            .map(|(&v, phi)| self.coeffs[v] * phi)
            .sum()
    }

    pub fn sub(&self, other: &FEFunction<'_>) -> FEFunction<'a> {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        FEFunction::new(self.mesh, coeffs)
    }
}

/// Nodal interpolant of the exact solution.
pub fn interpolate<'a>(mesh: &'a ShishkinMesh, exact: &ExactSolution) -> FEFunction<'a> {
    let coeffs = (0..mesh.node_count())
        .map(|node| {
            if mesh.is_boundary(node) {
                0.0
            } else {
                exact.value(&mesh.node_point(node))
            }
        })
        .collect();
    FEFunction::new(mesh, coeffs)
}

/// The three integrals the energy and SD norms are made of.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormParts {
    /// `|v|_1^2`
    pub grad_sq: f64,
    /// `||v||^2`
    pub l2_sq: f64,
    /// `Σ_K delta_K ||b v_x||^2_K`
    pub streamline_sq: f64,
}

impl NormParts {
    pub fn energy_sq(&self, eps: f64, mu0: f64) -> f64 {
        eps * self.grad_sq + mu0 * self.l2_sq
    }

    pub fn sd_sq(&self, eps: f64, mu0: f64) -> f64 {
        self.energy_sq(eps, mu0) + self.streamline_sq
    }
}

pub fn norm_parts(v: &FEFunction<'_>, problem: &Problem, config: &StabilizationConfig) -> Result<NormParts> {
    let mut parts = NormParts::default();
    for cell in &v.mesh.cells {
        let geom = CellGeometry::of_cell(v.mesh, cell);
        let delta = delta_for(config, cell.region);
        let verts = cell.vertices();
        for q in basis_points(&geom)? {
            let mut val = 0.0;
            let mut grad = [0.0; 2];
            for (k, &node) in verts.iter().enumerate() {
                let c = v.coeffs[node];
                val += c * q.values[k];
                grad[0] += c * q.grads[k][0];
                grad[1] += c * q.grads[k][1];
            }
            parts.grad_sq += q.weight * (grad[0] * grad[0] + grad[1] * grad[1]);
            parts.l2_sq += q.weight * val * val;
            if delta != 0.0 {
                let bvx = problem.b(&q.point) * grad[0];
                parts.streamline_sq += q.weight * delta * bvx * bvx;
            }
        }
    }
    Ok(parts)
}

/// `||v||_eps^2 = eps |v|_1^2 + mu0 ||v||^2`
pub fn energy_norm_sq(v: &FEFunction<'_>, eps: f64, mu0: f64) -> Result<f64> {
    let parts = norm_parts(v, &Problem::constant(eps, 0.0, 0.0, 0.0), &StabilizationConfig::zero())?;
    Ok(parts.energy_sq(eps, mu0))
}

/// `||v||_SD^2 = ||v||_eps^2 + Σ_K delta_K ||b v_x||^2_K`
pub fn sd_norm_sq(v: &FEFunction<'_>, problem: &Problem, config: &StabilizationConfig) -> Result<f64> {
    Ok(norm_parts(v, problem, config)?.sd_sq(problem.eps, problem.mu0))
}

/// Default stabilization: `delta_s = 1/N`, `delta_y = N^{-3/2}`, zero in the
/// cells that touch the outflow layer.
pub fn benchmark_delta_rule(n: usize) -> StabilizationConfig {
    let nf = n as f64;
    StabilizationConfig {
        delta_s: 1.0 / nf,
        delta_x: 0.0,
        delta_y: nf.powf(-1.5),
        delta_xy: 0.0,
    }
}

/// Benchmark rule with optional per-region overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaRule {
    pub s: Option<f64>,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub xy: Option<f64>,
}

impl DeltaRule {
    pub fn config(&self, n: usize) -> StabilizationConfig {
        let base = benchmark_delta_rule(n);
        StabilizationConfig {
            delta_s: self.s.unwrap_or(base.delta_s),
            delta_x: self.x.unwrap_or(base.delta_x),
            delta_y: self.y.unwrap_or(base.delta_y),
            delta_xy: self.xy.unwrap_or(base.delta_xy),
        }
    }
}

/// Everything besides `N`, `eps` and the layout that defines one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub beta: f64,
    pub rho: f64,
    pub mu0: f64,
    pub delta: DeltaRule,
    pub solver: GmresSettings,
    pub precond: PrecondKind,
    pub parallel_assembly: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            rho: DEFAULT_RHO,
            mu0: 2.0,
            delta: DeltaRule::default(),
            solver: GmresSettings::default(),
            precond: PrecondKind::Ilu0,
            parallel_assembly: false,
        }
    }
}

/// A solved benchmark instance.
#[derive(Debug)]
pub struct BenchmarkSolve {
    pub mesh: ShishkinMesh,
    pub bench: BenchmarkProblem,
    pub stabilization: StabilizationConfig,
    pub system: DiscreteSystem,
    /// Nodal values of the discrete solution, zero on the boundary.
    pub solution: Vec<f64>,
    pub stats: SolveStats,
}

impl BenchmarkSolve {
    pub fn discrete(&self) -> FEFunction<'_> {
        FEFunction::new(&self.mesh, self.solution.clone())
    }

    /// Norm parts of `u^I - u^N`.
    pub fn error_parts(&self) -> Result<NormParts> {
        let ui = interpolate(&self.mesh, &self.bench.exact);
        let diff = ui.sub(&self.discrete());
        norm_parts(&diff, &self.bench.problem, &self.stabilization)
    }
}

pub fn solve_benchmark(n: usize, eps: f64, layout: Layout, cfg: &RunConfig) -> Result<BenchmarkSolve> {
    let params = MeshParams::new(n, eps).with_beta(cfg.beta).with_rho(cfg.rho);
    let mesh = build_mesh(&params, layout)?;
    let bench = BenchmarkProblem::new(eps, cfg.mu0);
    let stabilization = cfg.delta.config(n);
    let system = assemble_with(
        &mesh,
        &bench.problem,
        &stabilization,
        AssemblyOptions {
            parallel: cfg.parallel_assembly,
        },
    )?;
    let precond = build_preconditioner(&system.matrix, cfg.precond)?;
    let (x, stats) = gmres(&system.matrix, &system.rhs, None, &cfg.solver, &precond)?;
    let solution = system.expand(&x);
    Ok(BenchmarkSolve {
        mesh,
        bench,
        stabilization,
        system,
        solution,
        stats,
    })
}

/// Errors `||u^I - u^N||` of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub layout: Layout,
    pub n: usize,
    pub eps: f64,
    pub mu0: f64,
    pub e_eps: f64,
    pub e_sd: f64,
    pub parts: NormParts,
    pub stats: SolveStats,
}

impl ErrorRecord {
    fn from_parts(layout: Layout, n: usize, eps: f64, mu0: f64, parts: NormParts, stats: SolveStats) -> Self {
        Self {
            layout,
            n,
            eps,
            mu0,
            e_eps: parts.energy_sq(eps, mu0).sqrt(),
            e_sd: parts.sd_sq(eps, mu0).sqrt(),
            parts,
            stats,
        }
    }

    /// The same record measured with a different `mu0`. The discrete solution
    /// does not depend on `mu0`, only the norms do.
    pub fn with_mu0(&self, mu0: f64) -> Self {
        Self::from_parts(self.layout, self.n, self.eps, mu0, self.parts, self.stats)
    }
}

pub fn supercloseness_error(n: usize, eps: f64, layout: Layout, cfg: &RunConfig) -> Result<ErrorRecord> {
    let run = solve_benchmark(n, eps, layout, cfg)?;
    let parts = run.error_parts()?;
    Ok(ErrorRecord::from_parts(layout, n, eps, cfg.mu0, parts, run.stats))
}

/// `(ln e_N - ln e_2N) / ln 2`
pub fn rate(e_n: f64, e_2n: f64) -> f64 {
    (e_n.ln() - e_2n.ln()) / std::f64::consts::LN_2
}

pub const DEFAULT_EPS_LIST: [f64; 6] = [1e-6, 1e-8, 1e-10, 1e-12, 1e-14, 1e-16];
pub const DEFAULT_N_LIST: [usize; 6] = [12, 24, 48, 96, 192, 384];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    /// Maximum over the eps list.
    pub e_eps: f64,
    pub rate_eps: Option<f64>,
    pub e_sd: f64,
    pub rate_sd: Option<f64>,
    /// Every eps of the list produced a converged run.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub layout: Layout,
    pub rows: Vec<TableRow>,
}

impl ConvergenceTable {
    /// Builds the table from per-run records; rows take the maximum over eps.
    /// A rate is reported between consecutive complete rows with `N` doubling.
    pub fn from_records(layout: Layout, ns: &[usize], eps_count: usize, records: &[ErrorRecord]) -> Self {
        let mut rows: Vec<TableRow> = ns
            .iter()
            .map(|&n| {
                let mine: Vec<&ErrorRecord> = records
                    .iter()
                    .filter(|r| r.n == n && r.layout == layout && r.stats.converged)
                    .collect();
                TableRow {
                    n,
                    e_eps: mine.iter().map(|r| r.e_eps).fold(f64::NAN, f64::max),
                    rate_eps: None,
                    e_sd: mine.iter().map(|r| r.e_sd).fold(f64::NAN, f64::max),
                    rate_sd: None,
                    complete: mine.len() == eps_count && eps_count > 0,
                }
            })
            .collect();
        for k in 0..rows.len().saturating_sub(1) {
            let (a, b) = (rows[k], rows[k + 1]);
            if a.complete && b.complete && b.n == 2 * a.n {
                rows[k].rate_eps = Some(rate(a.e_eps, b.e_eps));
                rows[k].rate_sd = Some(rate(a.e_sd, b.e_sd));
            }
        }
        Self { layout, rows }
    }

    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| r.complete)
    }

    pub fn rates_sd(&self) -> Vec<Option<f64>> {
        self.rows.iter().take(self.rows.len().saturating_sub(1)).map(|r| r.rate_sd).collect()
    }

    /// Least-squares slope of `-ln e_sd` against `ln N` over the last three
    /// rows, i.e. the mean of the last two rates.
    pub fn fitted_order(&self) -> Option<f64> {
        let k = self.rows.len();
        if k < 3 || !self.rows[k - 3..].iter().all(|r| r.complete) {
            return None;
        }
        let pts: Vec<(f64, f64)> = self.rows[k - 3..]
            .iter()
            .map(|r| ((r.n as f64).ln(), r.e_sd.ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(-sxy / sxx)
    }
}

/// Output of a convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyResult {
    pub layout: Layout,
    pub records: Vec<ErrorRecord>,
    /// Runs that failed before producing errors, with the reason.
    pub failures: Vec<RunFailure>,
    pub table: ConvergenceTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFailure {
    pub n: usize,
    pub eps: f64,
    pub reason: String,
}

impl StudyResult {
    pub fn complete(&self) -> bool {
        self.failures.is_empty() && self.table.complete()
    }

    /// Re-evaluates the study in the norms of a different `mu0`.
    pub fn with_mu0(&self, mu0: f64) -> Self {
        let records: Vec<ErrorRecord> = self.records.iter().map(|r| r.with_mu0(mu0)).collect();
        let ns: Vec<usize> = self.table.rows.iter().map(|r| r.n).collect();
        let eps_count = eps_count_of(&records, &self.failures);
        Self {
            layout: self.layout,
            table: ConvergenceTable::from_records(self.layout, &ns, eps_count, &records),
            records,
            failures: self.failures.clone(),
        }
    }
}

fn eps_count_of(records: &[ErrorRecord], failures: &[RunFailure]) -> usize {
    let mut eps: Vec<u64> = records
        .iter()
        .map(|r| r.eps.to_bits())
        .chain(failures.iter().map(|f| f.eps.to_bits()))
        .collect();
    eps.sort_unstable();
    eps.dedup();
    eps.len()
}

fn check_doubling(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::InvalidParams("empty N list".into()));
    }
    for w in ns.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(Error::InvalidParams(format!(
                "N list must double at every step ({} is followed by {})",
                w[0], w[1]
            )));
        }
    }
    for &n in ns {
        MeshParams::new(n, 1e-6).validate()?;
    }
    Ok(())
}

/// Runs every `(N, eps)` pair on the current rayon pool. Each run is
/// deterministic, so the result does not depend on the number of threads.
pub fn run_study(ns: &[usize], eps_list: &[f64], layout: Layout, cfg: &RunConfig) -> Result<StudyResult> {
    check_doubling(ns)?;
    if eps_list.is_empty() {
        return Err(Error::InvalidParams("empty eps list".into()));
    }
    let cases: Vec<(usize, f64)> = ns
        .iter()
        .flat_map(|&n| eps_list.iter().map(move |&e| (n, e)))
        .collect();
    // validate stabilization bounds up front so usage errors are not
    // reported as incomplete runs
    for &n in ns {
        let bench = BenchmarkProblem::new(eps_list[0], cfg.mu0);
        let mesh = build_mesh(&MeshParams::new(n, eps_list[0]).with_beta(cfg.beta).with_rho(cfg.rho), layout)?;
        cfg.delta.config(n).validate(&mesh, &bench.problem)?;
    }
    let outcomes: Vec<(usize, f64, Result<ErrorRecord>)> = cases
        .par_iter()
        .map(|&(n, eps)| (n, eps, supercloseness_error(n, eps, layout, cfg)))
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (n, eps, out) in outcomes {
        match out {
            Ok(r) if r.stats.converged => records.push(r),
            Ok(r) => {
                failures.push(RunFailure {
                    n,
                    eps,
                    reason: Error::NotConverged(r.stats).to_string(),
                });
                records.push(r);
            }
            Err(e) => failures.push(RunFailure {
                n,
                eps,
                reason: e.to_string(),
            }),
        }
    }
    let table = ConvergenceTable::from_records(layout, ns, eps_list.len(), &records);
    Ok(StudyResult {
        layout,
        records,
        failures,
        table,
    })
}

fn fmt_err(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3e}")
    } else {
        "---".into()
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(String::new, |r| format!("{r:.2}"))
}

/// `layout,N,e_eps,rate_eps,e_sd,rate_sd`
pub fn table_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from("layout,N,e_eps,rate_eps,e_sd,rate_sd\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            table.layout,
            r.n,
            fmt_err(r.e_eps),
            fmt_rate(r.rate_eps),
            fmt_err(r.e_sd),
            fmt_rate(r.rate_sd)
        );
    }
    out
}

pub fn table_markdown(table: &ConvergenceTable) -> String {
    let mut out = format!("Layout: {}\n\n", table.layout);
    out.push_str("| N | ‖u^I − u^N‖_ε | Rate | ‖u^I − u^N‖_SD | Rate |\n");
    out.push_str("|---:|---:|---:|---:|---:|\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.n,
            fmt_err(r.e_eps),
            fmt_rate(r.rate_eps),
            fmt_err(r.e_sd),
            fmt_rate(r.rate_sd)
        );
    }
    out
}

/// `N^{-3/2} ln^{3/4} N`
pub fn comparator(n: usize) -> f64 {
    let nf = n as f64;
    nf.powf(-1.5) * nf.ln().powf(0.75)
}

/// `N,e_sd,comparator,comparator_scaled`; the scaled comparator matches the
/// first row.
pub fn plot_csv(table: &ConvergenceTable) -> String {
    let mut out = String::from("N,e_sd,comparator,comparator_scaled\n");
    let scale = table
        .rows
        .first()
        .map_or(1.0, |r| r.e_sd / comparator(r.n));
    for r in &table.rows {
        let c = comparator(r.n);
        let _ = writeln!(out, "{},{:e},{:e},{:e}", r.n, r.e_sd, c, c * scale);
    }
    out
}

/// One line of the per-run CSV output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub layout: Layout,
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
    pub e_eps: f64,
    pub e_sd: f64,
    pub iters: usize,
    pub converged: bool,
}

impl From<&ErrorRecord> for RunRow {
    fn from(r: &ErrorRecord) -> Self {
        Self {
            layout: r.layout,
            n: r.n,
            eps: r.eps,
            e_eps: r.e_eps,
            e_sd: r.e_sd,
            iters: r.stats.iterations,
            converged: r.stats.converged,
        }
    }
}

/// `layout,N,eps,e_eps,e_sd,iters,converged`, values printed at full precision.
pub fn runs_csv(records: &[ErrorRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(RunRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record(["layout", "N", "eps", "e_eps", "e_sd", "iters", "converged"])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Lattice of reference points with `k` subdivisions per edge.
fn sample_points(kind: ElementKind, k: usize) -> Vec<[f64; 2]> {
    let kf = k as f64;
    let mut pts = Vec::new();
    for j in 0..=k {
        for i in 0..=k {
            if kind == ElementKind::P1Tri && i + j > k {
                continue;
            }
            pts.push([i as f64 / kf, j as f64 / kf]);
        }
    }
    pts
}

/// Sampled `max |u - u^I|` per region, indexed by [`RegionTag::index`].
pub fn interpolation_sup_error(mesh: &ShishkinMesh, exact: &ExactSolution, subdivisions: usize) -> [f64; 4] {
    let ui = interpolate(mesh, exact);
    let mut out = [0.0f64; 4];
    for (idx, cell) in mesh.cells.iter().enumerate() {
        let geom = CellGeometry::of_cell(mesh, cell);
        for xi in sample_points(geom.kind, subdivisions) {
            let shape = shape_eval(geom.kind, xi);
            let mut dx = 0.0;
            let mut dy = 0.0;
            for k in 0..geom.kind.node_count() {
                dx += shape.values[k] * geom.offsets[k][0];
                dy += shape.values[k] * geom.offsets[k][1];
            }
            let p = geom.origin.offset(dx, dy);
            let e = (exact.value(&p) - ui.eval_in_cell(idx, xi)).abs();
            let slot = &mut out[cell.region.index()];
            *slot = slot.max(e);
        }
    }
    out
}

pub fn sup_over(errors: &[f64; 4], regions: &[RegionTag]) -> f64 {
    regions.iter().map(|r| errors[r.index()]).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, eps: f64, parts: NormParts) -> ErrorRecord {
        ErrorRecord::from_parts(
            Layout::Triangular,
            n,
            eps,
            2.0,
            parts,
            SolveStats {
                iterations: 3,
                restarts: 0,
                relative_residual: 1e-13,
                converged: true,
            },
        )
    }

    #[test]
    fn rate_of_exact_power() {
        assert!((rate(1.0, 0.25) - 2.0).abs() < 1e-15);
        assert!((rate(4e-2, 1e-2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rate_of_paper_style_pair() {
        let r = rate(6.019e-2, 2.729e-2);
        assert!((r - 1.14).abs() < 0.005);
    }

    #[test]
    fn energy_norm_of_constant() {
        // v = 1 everywhere: no gradient, unit L2 norm
        let mesh = build_mesh(&MeshParams::new(6, 1e-4), Layout::Triangular).unwrap();
        let ones = FEFunction::new(&mesh, vec![1.0; mesh.node_count()]);
        let e = energy_norm_sq(&ones, 1e-4, 2.0).unwrap();
        assert!((e - 2.0).abs() < 1e-13);
    }

    #[test]
    fn sd_norm_of_linear_x() {
        // v = x: |v|_1^2 = 1, ||v||^2 = 1/3, ∫ delta b^2 with b = 1
        let mesh = build_mesh(&MeshParams::new(6, 1e-4), Layout::Rectangular).unwrap();
        let coeffs = (0..mesh.node_count()).map(|k| mesh.nodes()[k][0]).collect();
        let v = FEFunction::new(&mesh, coeffs);
        let p = Problem::constant(1e-4, 1.0, 1.0, 0.0);
        let cfg = StabilizationConfig::uniform(0.1);
        let parts = norm_parts(&v, &p, &cfg).unwrap();
        assert!((parts.grad_sq - 1.0).abs() < 1e-12);
        assert!((parts.l2_sq - 1.0 / 3.0).abs() < 1e-12);
        assert!((parts.streamline_sq - 0.1).abs() < 1e-12);
        assert!((sd_norm_sq(&v, &p, &cfg).unwrap() - (1e-4 + 1.0 / 3.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn interpolant_vanishes_on_boundary() {
        let mesh = build_mesh(&MeshParams::new(12, 1e-8), Layout::HybridI).unwrap();
        let ui = interpolate(&mesh, &ExactSolution::new(1e-8));
        for &b in mesh.boundary_nodes() {
            assert_eq!(ui.coeffs[b], 0.0);
        }
    }

    #[test]
    fn table_rates_and_formatting() {
        let ns = [12, 24, 48];
        let recs: Vec<ErrorRecord> = ns
            .iter()
            .flat_map(|&n| {
                let s = 1.0 / (n * n) as f64;
                [
                    record(n, 1e-6, NormParts { grad_sq: 0.0, l2_sq: s, streamline_sq: 0.0 }),
                    record(n, 1e-8, NormParts { grad_sq: 0.0, l2_sq: 0.5 * s, streamline_sq: s }),
                ]
            })
            .collect();
        let t = ConvergenceTable::from_records(Layout::Triangular, &ns, 2, &recs);
        assert!(t.complete());
        assert!((t.rows[0].rate_sd.unwrap() - 1.0).abs() < 1e-12);
        assert!((t.rows[0].rate_eps.unwrap() - 1.0).abs() < 1e-12);
        assert!(t.rows[2].rate_sd.is_none());
        assert!((t.fitted_order().unwrap() - 1.0).abs() < 1e-12);
        let csv = table_csv(&t);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "layout,N,e_eps,rate_eps,e_sd,rate_sd");
        assert!(lines[1].starts_with("triangular,12,"));
        assert!(lines[1].ends_with(",1.00"));
        let md = table_markdown(&t);
        assert!(md.contains("| 12 |"));
        assert!(plot_csv(&t).starts_with("N,e_sd,comparator"));
    }

    #[test]
    fn incomplete_rows_have_no_rate() {
        let ns = [12, 24];
        let recs = vec![
            record(12, 1e-6, NormParts { grad_sq: 1.0, l2_sq: 1.0, streamline_sq: 0.0 }),
            record(12, 1e-8, NormParts { grad_sq: 1.0, l2_sq: 1.0, streamline_sq: 0.0 }),
            record(24, 1e-6, NormParts { grad_sq: 1.0, l2_sq: 0.5, streamline_sq: 0.0 }),
        ];
        let t = ConvergenceTable::from_records(Layout::Triangular, &ns, 2, &recs);
        assert!(!t.rows[1].complete);
        assert!(t.rows[0].rate_sd.is_none());
    }

    #[test]
    fn runs_csv_round_trip() {
        let recs = vec![
            record(12, 1e-6, NormParts { grad_sq: 0.3, l2_sq: 1.0 / 3.0, streamline_sq: 0.1 }),
            record(24, 1e-16, NormParts { grad_sq: 0.7, l2_sq: 2.0f64.sqrt(), streamline_sq: 0.0 }),
        ];
        let text = runs_csv(&recs).unwrap();
        assert!(text.starts_with("layout,N,eps,e_eps,e_sd,iters,converged\n"));
        let rows = parse_runs_csv(&text).unwrap();
        assert_eq!(rows.len(), 2);
        for (row, r) in rows.iter().zip(&recs) {
            assert_eq!(row, &RunRow::from(r));
        }
    }

    #[test]
    fn doubling_chain_required() {
        let cfg = RunConfig::default();
        assert!(run_study(&[12, 36], &[1e-6], Layout::Triangular, &cfg).is_err());
        assert!(run_study(&[10, 20], &[1e-6], Layout::Triangular, &cfg).is_err());
        assert!(run_study(&[12], &[], Layout::Triangular, &cfg).is_err());
    }

    #[test]
    fn small_solve_converges() {
        let rec = supercloseness_error(12, 1e-6, Layout::Triangular, &RunConfig::default()).unwrap();
        assert!(rec.stats.converged);
        assert!(rec.e_sd >= rec.e_eps);
        assert!(rec.e_sd > 0.0 && rec.e_sd < 1.0);
        let other = rec.with_mu0(1.0);
        assert!(other.e_eps < rec.e_eps);
        assert_eq!(other.parts, rec.parts);
    }

    #[test]
    fn mu0_does_not_change_the_solution() {
        let a = solve_benchmark(12, 1e-8, Layout::HybridI, &RunConfig::default()).unwrap();
        let cfg = RunConfig {
            mu0: 1.0,
            ..RunConfig::default()
        };
        let b = solve_benchmark(12, 1e-8, Layout::HybridI, &cfg).unwrap();
        assert_eq!(a.solution, b.solution);
    }

    #[test]
    fn interpolation_error_small_in_smooth_region() {
        let mesh = build_mesh(&MeshParams::new(24, 1e-8), Layout::Triangular).unwrap();
        let errs = interpolation_sup_error(&mesh, &ExactSolution::new(1e-8), 4);
        assert!(errs[RegionTag::Smooth.index()] < 5e-3);
        assert!(sup_over(&errs, &RegionTag::ALL) >= errs[RegionTag::Smooth.index()]);
    }
}

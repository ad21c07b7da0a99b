//! Property suite run by `layerfem check`.
//!
//! Every suite is deterministic for a given seed and reports its worst
//! observed value next to the tolerance it is held to.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{benchmark_delta_rule, energy_norm_sq, norm_parts, solve_benchmark, FEFunction, RunConfig};
use crate::assembly::{assemble, assemble_norm_matrices, coercivity_check, Problem, StabilizationConfig};
use crate::error::Result;
use crate::fem::{quadrature_for, ElementKind};
use crate::linalg::relative_residual;
use crate::mesh::{build_mesh, CellKind, Layout, MeshParams, Point, ShishkinMesh};
use crate::problems::{BenchmarkProblem, ExactSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    pub seed: u64,
    /// Runs the coercivity suite with `delta_s` above its admissible bound.
    pub inject_delta_violation: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            inject_delta_violation: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

pub fn run_checks(options: &CheckOptions) -> Result<CheckReport> {
    let mut suites = vec![
        coercivity_suite(options)?,
        oracle_suite()?,
        quadrature_suite()?,
        residual_suite(options.seed),
        norm_form_suite(options.seed)?,
    ];
    suites.extend(solver_suites()?);
    Ok(CheckReport {
        seed: options.seed,
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

fn coercivity_suite(options: &CheckOptions) -> Result<SuiteResult> {
    let eps = 1e-6;
    let bench = BenchmarkProblem::new(eps, 2.0);
    let mut worst = f64::INFINITY;
    let mut cases = 0;
    for (k, layout) in Layout::ALL.into_iter().enumerate() {
        let mesh = build_mesh(&MeshParams::new(12, eps), layout)?;
        let mut cfg = benchmark_delta_rule(12);
        if options.inject_delta_violation {
            cfg.delta_s = 2.0 * bench.problem.mu0 / (2.0 * 1.5 * 1.5);
        }
        match coercivity_check(&mesh, &bench.problem, &cfg, 100, options.seed.wrapping_add(k as u64)) {
            Ok(rep) => {
                cases += rep.trials;
                worst = worst.min(rep.min_ratio);
                if !rep.passed() {
                    return Ok(SuiteResult {
                        name: "coercivity",
                        passed: false,
                        cases,
                        worst,
                        tolerance: 0.5,
                        detail: format!("{layout}: {} trials below one half", rep.violations),
                    });
                }
            }
            Err(e) => {
                return Ok(SuiteResult {
                    name: "coercivity",
                    passed: false,
                    cases,
                    worst,
                    tolerance: 0.5,
                    detail: format!("{layout}: {e}"),
                })
            }
        }
    }
    Ok(SuiteResult {
        name: "coercivity",
        passed: worst >= 0.5,
        cases,
        worst,
        tolerance: 0.5,
        detail: "min a_SD(v,v) / ||v||_SD^2 over random v, N = 12".into(),
    })
}

/// Five-point Gauss–Legendre rule on `[0, 1]`, written out independently of
/// the quadrature module.
const GL5: [(f64, f64); 5] = [
    (0.046_910_077_030_668, 0.118_463_442_528_094_5),
    (0.230_765_344_947_158_5, 0.239_314_335_249_683_2),
    (0.5, 0.284_444_444_444_444_4),
    (0.769_234_655_052_841_5, 0.239_314_335_249_683_2),
    (0.953_089_922_969_332, 0.118_463_442_528_094_5),
];

/// Vertex positions of a cell relative to its first vertex. Node coordinates
/// near `x = 1` cannot resolve layer widths at small `eps`, so the oracle works
/// with the exact offsets and shifts points back through [`Point::offset`].
fn local_vertices(mesh: &ShishkinMesh, cell: usize) -> Vec<[f64; 2]> {
    let c = &mesh.cells[cell];
    mesh.vertex_offsets(c)[..c.kind.vertex_count()].to_vec()
}

/// Global hat function of `node` restricted to one cell, evaluated directly
/// from the vertex positions at local coordinates `(x, y)`.
fn hat(mesh: &ShishkinMesh, cell: usize, node: usize, x: f64, y: f64) -> (f64, [f64; 2]) {
    let c = &mesh.cells[cell];
    let v = local_vertices(mesh, cell);
    let local = c.vertices().iter().position(|&k| k == node).expect("node belongs to cell");
    if c.kind == CellKind::Quad {
        let (x0, x1) = (v[0][0], v[2][0]);
        let (y0, y1) = (v[0][1], v[2][1]);
        let (hx, hy) = (x1 - x0, y1 - y0);
        let (vx, vy) = (v[local][0], v[local][1]);
        let (fx, dfx) = if vx == x0 { ((x1 - x) / hx, -1.0 / hx) } else { ((x - x0) / hx, 1.0 / hx) };
        let (fy, dfy) = if vy == y0 { ((y1 - y) / hy, -1.0 / hy) } else { ((y - y0) / hy, 1.0 / hy) };
        (fx * fy, [dfx * fy, fx * dfy])
    } else {
        // barycentric coordinate of the local vertex by Cramer's rule
        let (a, b) = ((local + 1) % 3, (local + 2) % 3);
        let area2 = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        let val = ((v[a][0] - x) * (v[b][1] - y) - (v[b][0] - x) * (v[a][1] - y)) / area2;
        let gx = (v[a][1] - v[b][1]) / area2;
        let gy = (v[b][0] - v[a][0]) / area2;
        (val, [gx, gy])
    }
}

/// Quadrature points `(local x, local y, weight)` of one cell: collapsed
/// 5x5 Gauss on triangles, 5x5 tensor Gauss on rectangles.
fn oracle_points(mesh: &ShishkinMesh, cell: usize) -> Vec<(f64, f64, f64)> {
    let c = &mesh.cells[cell];
    let v = local_vertices(mesh, cell);
    let mut out = Vec::with_capacity(25);
    for &(s, ws) in &GL5 {
        for &(t, wt) in &GL5 {
            if c.kind == CellKind::Quad {
                let (hx, hy) = (v[2][0] - v[0][0], v[2][1] - v[0][1]);
                out.push((v[0][0] + s * hx, v[0][1] + t * hy, ws * wt * hx * hy));
            } else {
                // (s, t) in the unit square -> (s, (1 - s) t) in the unit triangle
                let (l1, l2) = (s, (1.0 - s) * t);
                let x = v[0][0] + l1 * (v[1][0] - v[0][0]) + l2 * (v[2][0] - v[0][0]);
                let y = v[0][1] + l1 * (v[1][1] - v[0][1]) + l2 * (v[2][1] - v[0][1]);
                let area2 = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
                out.push((x, y, ws * wt * (1.0 - s) * area2));
            }
        }
    }
    out
}

/// Dense node-by-node assembly from the weak form, for small meshes only.
pub fn oracle_system(mesh: &ShishkinMesh, problem: &Problem, config: &StabilizationConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let interior: Vec<usize> = (0..mesh.node_count()).filter(|&k| !mesh.is_boundary(k)).collect();
    let n = interior.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (r, &nr) in interior.iter().enumerate() {
        for (cell_idx, cell) in mesh.cells.iter().enumerate() {
            if !cell.vertices().contains(&nr) {
                continue;
            }
            let delta = crate::assembly::delta_for(config, cell.region);
            let origin = mesh.cell_origin(cell);
            let pts = oracle_points(mesh, cell_idx);
            for &(x, y, w) in &pts {
                let p = origin.offset(x, y);
                let (phi_r, g_r) = hat(mesh, cell_idx, nr, x, y);
                let b = problem.b(&p);
                let test = phi_r + delta * b * g_r[0];
                rhs[r] += w * problem.f(&p) * test;
            }
            for (s, &ns) in interior.iter().enumerate() {
                if !cell.vertices().contains(&ns) {
                    continue;
                }
                for &(x, y, w) in &pts {
                    let p = origin.offset(x, y);
                    let (phi_r, g_r) = hat(mesh, cell_idx, nr, x, y);
                    let (phi_s, g_s) = hat(mesh, cell_idx, ns, x, y);
                    let b = problem.b(&p);
                    let diff = problem.eps * (g_s[0] * g_r[0] + g_s[1] * g_r[1]);
                    let trans = (b * g_s[0] + problem.c(&p) * phi_s) * (phi_r + delta * b * g_r[0]);
                    a[r][s] += w * (diff + trans);
                }
            }
        }
    }
    (a, rhs)
}

/// Relative difference of one entry; structural zeros must match exactly
/// up to round-off of the summands.
fn entry_error(x: f64, oracle: f64) -> f64 {
    let diff = (x - oracle).abs();
    if oracle == 0.0 {
        if diff <= 1e-15 { 0.0 } else { f64::INFINITY }
    } else {
        diff / oracle.abs()
    }
}

fn oracle_suite() -> Result<SuiteResult> {
    let cfg = benchmark_delta_rule(6);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for eps in [1e-6, 1e-16] {
        let bench = BenchmarkProblem::new(eps, 2.0);
        // the matrix integrands are polynomials, so both rules integrate them
        // exactly; the load is compared for a polynomial source
        let poly = Problem::new(
            eps,
            1.0,
            2.0,
            std::sync::Arc::new(|p: &Point| 1.0 + p.x_rem),
            std::sync::Arc::new(|_| -1.0),
            std::sync::Arc::new(|_| 1.5),
            std::sync::Arc::new(|p: &Point| 1.0 + p.x * p.y - p.y * p.y),
        );
        for layout in Layout::ALL {
            let mesh = build_mesh(&MeshParams::new(6, eps), layout)?;
            let sys = assemble(&mesh, &bench.problem, &cfg)?;
            let (a, _) = oracle_system(&mesh, &bench.problem, &cfg);
            let dense = sys.matrix.to_dense();
            for (ra, rb) in dense.iter().zip(&a) {
                for (x, y) in ra.iter().zip(rb) {
                    worst = worst.max(entry_error(*x, *y));
                    cases += 1;
                }
            }
            let sys = assemble(&mesh, &poly, &cfg)?;
            let (_, l) = oracle_system(&mesh, &poly, &cfg);
            for (x, y) in sys.rhs.iter().zip(&l) {
                worst = worst.max(entry_error(*x, *y));
                cases += 1;
            }
        }
    }
    Ok(SuiteResult {
        name: "oracle_assembly",
        passed: worst <= 1e-12,
        cases,
        worst,
        tolerance: 1e-12,
        detail: "sparse vs dense node-by-node assembly, entrywise, N = 6, eps in {1e-6, 1e-16}, all layouts".into(),
    })
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn quadrature_suite() -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for kind in [ElementKind::P1Tri, ElementKind::Q1Quad] {
        for degree in 1..=6 {
            let rule = quadrature_for(kind, degree)?;
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let approx: f64 = rule.iter().map(|([s, t], w)| w * s.powi(a as i32) * t.powi(b as i32)).sum();
                    let exact = match kind {
                        ElementKind::P1Tri => factorial(a) * factorial(b) / factorial(a + b + 2),
                        ElementKind::Q1Quad => {
                            let m = |k: usize| if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
                            m(a) * m(b)
                        }
                    };
                    worst = worst.max((approx - exact).abs());
                    cases += 1;
                }
            }
        }
    }
    Ok(SuiteResult {
        name: "quadrature_exactness",
        passed: worst <= 1e-13,
        cases,
        worst,
        tolerance: 1e-13,
        detail: "monomials up to the stated degree on the reference cells".into(),
    })
}

fn residual_suite(seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for eps in [1e-2, 1e-4, 1e-6, 1e-8, 1e-12, 1e-16] {
        let u = ExactSolution::new(eps);
        for _ in 0..200 {
            let x_rem: f64 = rng.gen_range(0.0..1.0);
            if x_rem <= 10.0 * eps {
                continue;
            }
            let y: f64 = rng.gen_range(0.0..1.0);
            let p = Point {
                x: 1.0 - x_rem,
                y,
                x_rem,
                y_rem: 1.0 - y,
            };
            let [uxx, uyy] = u.second_derivatives(&p);
            let [ux, _] = u.grad(&p);
            let terms = [-eps * uxx, -eps * uyy, (2.0 - p.x) * ux, 1.5 * u.value(&p), -u.rhs(&p)];
            let scale: f64 = terms.iter().map(|t| t.abs()).sum();
            let res: f64 = terms.iter().sum();
            if scale > 0.0 {
                worst = worst.max(res.abs() / scale);
            }
            cases += 1;
        }
    }
    SuiteResult {
        name: "pde_residual",
        passed: worst <= 1e-8,
        cases,
        worst,
        tolerance: 1e-8,
        detail: "|-eps Δu + b u_x + c u - f| relative to the sum of term magnitudes, 1 - x > 10 eps".into(),
    }
}

fn norm_form_suite(seed: u64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let eps = 1e-6;
    let bench = BenchmarkProblem::new(eps, 2.0);
    for layout in Layout::ALL {
        let mesh = build_mesh(&MeshParams::new(12, eps), layout)?;
        let cfg = benchmark_delta_rule(12);
        let mats = assemble_norm_matrices(&mesh, &bench.problem, &cfg)?;
        for _ in 0..20 {
            let v: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = mats.stiffness.quadratic_form(&v)?;
            let m = mats.mass.quadratic_form(&v)?;
            let s = mats.streamline.quadratic_form(&v)?;
            let fe = FEFunction::new(&mesh, v);
            let e_form = eps * k + 2.0 * m;
            let e_norm = energy_norm_sq(&fe, eps, 2.0)?;
            let sd_norm = norm_parts(&fe, &bench.problem, &cfg)?.sd_sq(eps, 2.0);
            worst = worst.max((e_form - e_norm).abs() / e_norm);
            worst = worst.max((e_form + s - sd_norm).abs() / sd_norm);
            cases += 2;
        }
    }
    Ok(SuiteResult {
        name: "norm_quadratic_form",
        passed: worst <= 1e-12,
        cases,
        worst,
        tolerance: 1e-12,
        detail: "energy and SD norms vs d^T (eps K + mu0 M [+ S]) d".into(),
    })
}

fn solver_suites() -> Result<[SuiteResult; 2]> {
    let cfg = RunConfig::default();
    let mut worst_res: f64 = 0.0;
    let mut worst_gap = f64::INFINITY;
    let mut cases = 0;
    let mut detail = String::from("converged solves, N in {12, 24}, eps in {1e-6, 1e-16}, all layouts");
    let mut all_converged = true;
    for layout in Layout::ALL {
        for n in [12, 24] {
            for eps in [1e-6, 1e-16] {
                let run = solve_benchmark(n, eps, layout, &cfg)?;
                cases += 1;
                if !run.stats.converged {
                    all_converged = false;
                    detail = format!("{layout} N={n} eps={eps:e} did not converge");
                    continue;
                }
                let x = run.system.restrict(&run.solution);
                let res = relative_residual(&run.system.matrix, &x, &run.system.rhs)?;
                worst_res = worst_res.max(res / cfg.solver.tol);
                let parts = run.error_parts()?;
                let (e_eps, e_sd) = (parts.energy_sq(eps, cfg.mu0).sqrt(), parts.sd_sq(eps, cfg.mu0).sqrt());
                worst_gap = worst_gap.min(e_sd - e_eps);
            }
        }
    }
    Ok([
        SuiteResult {
            name: "solver_residual",
            passed: all_converged && worst_res <= 1.0,
            cases,
            worst: worst_res,
            tolerance: 1.0,
            detail: format!("{detail}; worst true residual / tol"),
        },
        SuiteResult {
            name: "sd_dominates_energy",
            passed: worst_gap >= 0.0,
            cases,
            worst: worst_gap,
            tolerance: 0.0,
            detail: "min e_sd - e_eps over the same solves".into(),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl5_integrates_degree_nine() {
        for k in 0..=9 {
            let approx: f64 = GL5.iter().map(|(x, w)| w * x.powi(k)).sum();
            assert!((approx - 1.0 / (k + 1) as f64).abs() < 1e-15, "degree {k}");
        }
    }

    #[test]
    fn oracle_points_cover_cell_area() {
        for layout in Layout::ALL {
            let mesh = build_mesh(&MeshParams::new(6, 1e-2), layout).unwrap();
            for (k, cell) in mesh.cells.iter().enumerate() {
                let area: f64 = oracle_points(&mesh, k).iter().map(|q| q.2).sum();
                assert!((area - mesh.signed_area(cell)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn hats_form_partition_of_unity() {
        let mesh = build_mesh(&MeshParams::new(6, 1e-2), Layout::HybridII).unwrap();
        for (k, cell) in mesh.cells.iter().enumerate() {
            for &(x, y, _) in &oracle_points(&mesh, k) {
                let total: f64 = cell.vertices().iter().map(|&v| hat(&mesh, k, v, x, y).0).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_matches_sparse_assembly() {
        let s = oracle_suite().unwrap();
        assert!(s.passed, "worst {}", s.worst);
    }

    #[test]
    fn quadrature_and_residual_suites_pass() {
        assert!(quadrature_suite().unwrap().passed);
        let r = residual_suite(7);
        assert!(r.passed, "worst {}", r.worst);
        assert!(r.cases > 1000);
    }

    #[test]
    fn injected_violation_fails_coercivity() {
        let s = coercivity_suite(&CheckOptions {
            seed: 1,
            inject_delta_violation: true,
        })
        .unwrap();
        assert!(!s.passed);
        assert!(s.detail.contains("coercivity bound"));
    }
}

//! Streamline-diffusion assembly.
//!
//! For a cell `K` with stabilization weight `delta` the local entries are
//!
//! ```text
//! a(s, r) = ∫_K eps ∇φ_s·∇φ_r + (b ∂xφ_s + c φ_s)(φ_r + delta b ∂xφ_r)
//! l(r)    = ∫_K f (φ_r + delta b ∂xφ_r)
//! ```
//!
//! The `-eps Δu` part of the residual term vanishes for P1 functions and for
//! Q1 functions on axis-aligned rectangles, so it is not assembled.
//! Homogeneous Dirichlet nodes are removed from the system.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{norm_parts, FEFunction};
use crate::error::{Error, Result};
use crate::fem::{assembly_rule, map_to_physical, shape_eval, CellGeometry, ElementKind, QuadratureRule};
use crate::linalg::CsrMatrix;
use crate::mesh::{Point, RegionTag, ShishkinMesh};

pub type Coefficient = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// `-eps Δu + b u_x + c u = f` on the unit square, `u = 0` on the boundary.
#[derive(Clone)]
pub struct Problem {
    pub eps: f64,
    /// Lower bound of `b`.
    pub beta: f64,
    /// Lower bound of `c - b_x / 2`.
    pub mu0: f64,
    b: Coefficient,
    b_x: Coefficient,
    c: Coefficient,
    f: Coefficient,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("eps", &self.eps)
            .field("beta", &self.beta)
            .field("mu0", &self.mu0)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        eps: f64,
        beta: f64,
        mu0: f64,
        b: Coefficient,
        b_x: Coefficient,
        c: Coefficient,
        f: Coefficient,
    ) -> Self {
        Self {
            eps,
            beta,
            mu0,
            b,
            b_x,
            c,
            f,
        }
    }

    /// Problem with constant coefficients.
    pub fn constant(eps: f64, b: f64, c: f64, f: f64) -> Self {
        Self::new(
            eps,
            b,
            if c > 0.0 { c } else { 1.0 },
            Arc::new(move |_| b),
            Arc::new(|_| 0.0),
            Arc::new(move |_| c),
            Arc::new(move |_| f),
        )
    }

    pub fn b(&self, p: &Point) -> f64 {
        (self.b)(p)
    }

    pub fn b_x(&self, p: &Point) -> f64 {
        (self.b_x)(p)
    }

    pub fn c(&self, p: &Point) -> f64 {
        (self.c)(p)
    }

    pub fn f(&self, p: &Point) -> f64 {
        (self.f)(p)
    }

    /// Spot-checks `b >= beta > 0` and `c - b_x/2 >= mu0 > 0` on a uniform
    /// `samples x samples` grid.
    pub fn validate(&self, samples: usize) -> Result<()> {
        if !(self.eps > 0.0 && self.beta > 0.0 && self.mu0 > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "need eps, beta, mu0 > 0 (got {}, {}, {})",
                self.eps, self.beta, self.mu0
            )));
        }
        let m = samples.max(2);
        for j in 0..m {
            for i in 0..m {
                let p = Point::new(i as f64 / (m - 1) as f64, j as f64 / (m - 1) as f64);
                let b = self.b(&p);
                if b < self.beta {
                    return Err(Error::InvalidProblem(format!(
                        "b = {b} < beta = {} at ({}, {})",
                        self.beta, p.x, p.y
                    )));
                }
                let reaction = self.c(&p) - 0.5 * self.b_x(&p);
                if reaction < self.mu0 {
                    return Err(Error::InvalidProblem(format!(
                        "c - b_x/2 = {reaction} < mu0 = {} at ({}, {})",
                        self.mu0, p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Region-wise constant streamline-diffusion weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationConfig {
    pub delta_s: f64,
    pub delta_x: f64,
    pub delta_y: f64,
    pub delta_xy: f64,
}

impl StabilizationConfig {
    pub fn uniform(delta: f64) -> Self {
        Self {
            delta_s: delta,
            delta_x: delta,
            delta_y: delta,
            delta_xy: delta,
        }
    }

    pub fn zero() -> Self {
        Self::uniform(0.0)
    }

    /// Checks `0 <= delta_K <= mu0 / (2 ||c||^2_{L∞(K)})` region by region.
    /// The supremum of `|c|` is sampled at the vertices and quadrature points
    /// of every cell of the region.
    pub fn validate(&self, mesh: &ShishkinMesh, problem: &Problem) -> Result<()> {
        let mut c_sup = [0.0f64; 4];
        for cell in &mesh.cells {
            let geom = CellGeometry::of_cell(mesh, cell);
            let slot = &mut c_sup[cell.region.index()];
            for k in 0..geom.kind.node_count() {
                let [dx, dy] = geom.offsets[k];
                *slot = slot.max(problem.c(&geom.origin.offset(dx, dy)).abs());
            }
            for (xi, _) in rule(geom.kind).iter() {
                let m = map_to_physical(&geom, xi)?;
                *slot = slot.max(problem.c(&m.point).abs());
            }
        }
        for tag in RegionTag::ALL {
            let delta = delta_for(self, tag);
            if delta < 0.0 || !delta.is_finite() {
                return Err(Error::NegativeDelta(delta));
            }
            let c2 = c_sup[tag.index()].powi(2);
            if c2 > 0.0 {
                let bound = problem.mu0 / (2.0 * c2);
                if delta > bound {
                    return Err(Error::DeltaBound {
                        region: tag,
                        delta,
                        bound,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn delta_for(config: &StabilizationConfig, tag: RegionTag) -> f64 {
    match tag {
        RegionTag::Smooth => config.delta_s,
        RegionTag::ExponentialLayer => config.delta_x,
        RegionTag::CharacteristicLayer => config.delta_y,
        RegionTag::Corner => config.delta_xy,
    }
}

fn rule(kind: ElementKind) -> &'static QuadratureRule {
    static TRI: OnceLock<QuadratureRule> = OnceLock::new();
    static QUAD: OnceLock<QuadratureRule> = OnceLock::new();
    match kind {
        ElementKind::P1Tri => TRI.get_or_init(|| assembly_rule(ElementKind::P1Tri)),
        ElementKind::Q1Quad => QUAD.get_or_init(|| assembly_rule(ElementKind::Q1Quad)),
    }
}

/// Dense element matrix of size 3 or 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementMatrix {
    pub size: usize,
    pub data: [[f64; 4]; 4],
}

impl ElementMatrix {
    pub fn get(&self, r: usize, s: usize) -> f64 {
        self.data[r][s]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementVector {
    pub size: usize,
    pub data: [f64; 4],
}

/// Physical values and gradients of the local basis at one quadrature point.
pub(crate) struct BasisAt {
    pub point: Point,
    pub weight: f64,
    pub values: [f64; 4],
    pub grads: [[f64; 2]; 4],
}

pub(crate) fn basis_points(geom: &CellGeometry) -> Result<impl Iterator<Item = BasisAt> + '_> {
    let r = rule(geom.kind);
    let mut out = Vec::with_capacity(r.len());
    for (xi, w) in r.iter() {
        let m = map_to_physical(geom, xi)?;
        let shape = shape_eval(geom.kind, xi);
        let mut grads = [[0.0; 2]; 4];
        for (g, rg) in grads.iter_mut().zip(&shape.gradients) {
            *g = m.physical_gradient(*rg);
        }
        out.push(BasisAt {
            point: m.point,
            weight: w * m.det,
            values: shape.values,
            grads,
        });
    }
    Ok(out.into_iter())
}

pub fn local_matrix(geom: &CellGeometry, problem: &Problem, delta: f64) -> Result<ElementMatrix> {
    let n = geom.kind.node_count();
    let mut data = [[0.0; 4]; 4];
    for q in basis_points(geom)? {
        let b = problem.b(&q.point);
        let c = problem.c(&q.point);
        for r in 0..n {
            let test = q.values[r] + delta * b * q.grads[r][0];
            for s in 0..n {
                let diffusion =
                    problem.eps * (q.grads[s][0] * q.grads[r][0] + q.grads[s][1] * q.grads[r][1]);
                let transport = b * q.grads[s][0] + c * q.values[s];
                data[r][s] += q.weight * (diffusion + transport * test);
            }
        }
    }
    Ok(ElementMatrix { size: n, data })
}

pub fn local_rhs(geom: &CellGeometry, problem: &Problem, delta: f64) -> Result<ElementVector> {
    let n = geom.kind.node_count();
    let mut data = [0.0; 4];
    for q in basis_points(geom)? {
        let f = problem.f(&q.point);
        if !f.is_finite() {
            return Err(Error::NonFiniteSource {
                x: q.point.x,
                y: q.point.y,
            });
        }
        let b = if delta != 0.0 { problem.b(&q.point) } else { 0.0 };
        for r in 0..n {
            data[r] += q.weight * f * (q.values[r] + delta * b * q.grads[r][0]);
        }
    }
    Ok(ElementVector { size: n, data })
}

/// Assembled linear system on the interior nodes.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Row index -> mesh node.
    pub dof_to_node: Vec<usize>,
    /// Mesh node -> row index, `None` on the boundary.
    pub node_to_dof: Vec<Option<usize>>,
    pub eliminated: Vec<usize>,
}

impl DiscreteSystem {
    pub fn dofs(&self) -> usize {
        self.dof_to_node.len()
    }

    /// Extends an interior vector by zeros on the boundary.
    pub fn expand(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.node_to_dof.len()];
        for (&node, &v) in self.dof_to_node.iter().zip(interior) {
            full[node] = v;
        }
        full
    }

    /// Restricts a nodal vector to the interior nodes.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.dof_to_node.iter().map(|&node| full[node]).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Compute element matrices on the rayon pool. The scatter stays serial
    /// and in cell order, so the result is bitwise identical either way.
    pub parallel: bool,
}

pub fn assemble(mesh: &ShishkinMesh, problem: &Problem, config: &StabilizationConfig) -> Result<DiscreteSystem> {
    assemble_with(mesh, problem, config, AssemblyOptions::default())
}

pub fn assemble_with(
    mesh: &ShishkinMesh,
    problem: &Problem,
    config: &StabilizationConfig,
    options: AssemblyOptions,
) -> Result<DiscreteSystem> {
    config.validate(mesh, problem)?;

    let mut node_to_dof = vec![None; mesh.node_count()];
    let mut dof_to_node = Vec::new();
    for (node, slot) in node_to_dof.iter_mut().enumerate() {
        if !mesh.is_boundary(node) {
            *slot = Some(dof_to_node.len());
            dof_to_node.push(node);
        }
    }

    let mut pattern: Vec<Vec<usize>> = vec![Vec::with_capacity(9); dof_to_node.len()];
    for cell in &mesh.cells {
        for &a in cell.vertices() {
            let Some(ra) = node_to_dof[a] else { continue };
            for &b in cell.vertices() {
                if let Some(rb) = node_to_dof[b] {
                    pattern[ra].push(rb);
                }
            }
        }
    }
    for row in &mut pattern {
        row.sort_unstable();
        row.dedup();
    }
    let mut matrix = CsrMatrix::zeros_with_pattern(&pattern)?;
    let mut rhs = vec![0.0; dof_to_node.len()];

    let local = |idx: usize| -> Result<(ElementMatrix, ElementVector)> {
        let cell = &mesh.cells[idx];
        let geom = CellGeometry::of_cell(mesh, cell);
        let delta = delta_for(config, cell.region);
        let fix = |e: Error| match e {
            Error::DegenerateCell { det, .. } => Error::DegenerateCell { cell: idx, det },
            other => other,
        };
        let a = local_matrix(&geom, problem, delta).map_err(fix)?;
        let l = local_rhs(&geom, problem, delta).map_err(fix)?;
        Ok((a, l))
    };
    let locals: Vec<(ElementMatrix, ElementVector)> = if options.parallel {
        (0..mesh.cells.len()).into_par_iter().map(local).collect::<Result<_>>()?
    } else {
        (0..mesh.cells.len()).map(local).collect::<Result<_>>()?
    };

    for (cell, (a, l)) in mesh.cells.iter().zip(&locals) {
        let verts = cell.vertices();
        for (r, &vr) in verts.iter().enumerate() {
            let Some(row) = node_to_dof[vr] else { continue };
            rhs[row] += l.data[r];
            for (s, &vs) in verts.iter().enumerate() {
                if let Some(col) = node_to_dof[vs] {
                    matrix.add_at(row, col, a.data[r][s]);
                }
            }
        }
    }

    Ok(DiscreteSystem {
        matrix,
        rhs,
        dof_to_node,
        node_to_dof,
        eliminated: mesh.boundary_nodes().to_vec(),
    })
}

/// Global matrices of the quadratic forms behind the energy and SD norms,
/// on all nodes (boundary included).
#[derive(Debug, Clone)]
pub struct NormMatrices {
    /// `∫ v w`
    pub mass: CsrMatrix,
    /// `∫ ∇v·∇w`
    pub stiffness: CsrMatrix,
    /// `Σ_K delta_K ∫_K b² v_x w_x`
    pub streamline: CsrMatrix,
}

pub fn assemble_norm_matrices(
    mesh: &ShishkinMesh,
    problem: &Problem,
    config: &StabilizationConfig,
) -> Result<NormMatrices> {
    let mut mass = Vec::new();
    let mut stiff = Vec::new();
    let mut stream = Vec::new();
    for cell in &mesh.cells {
        let geom = CellGeometry::of_cell(mesh, cell);
        let delta = delta_for(config, cell.region);
        let verts = cell.vertices();
        let n = verts.len();
        let mut m = [[0.0; 4]; 4];
        let mut k = [[0.0; 4]; 4];
        let mut s = [[0.0; 4]; 4];
        for q in basis_points(&geom)? {
            let b = problem.b(&q.point);
            for r in 0..n {
                for t in 0..n {
                    m[r][t] += q.weight * q.values[r] * q.values[t];
                    k[r][t] += q.weight * (q.grads[r][0] * q.grads[t][0] + q.grads[r][1] * q.grads[t][1]);
                    s[r][t] += q.weight * delta * b * b * q.grads[r][0] * q.grads[t][0];
                }
            }
        }
        for r in 0..n {
            for t in 0..n {
                mass.push((verts[r], verts[t], m[r][t]));
                stiff.push((verts[r], verts[t], k[r][t]));
                stream.push((verts[r], verts[t], s[r][t]));
            }
        }
    }
    let n = mesh.node_count();
    Ok(NormMatrices {
        mass: CsrMatrix::from_triplets(n, &mass)?,
        stiffness: CsrMatrix::from_triplets(n, &stiff)?,
        streamline: CsrMatrix::from_triplets(n, &stream)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub trials: usize,
    /// Smallest observed `v^T A v / ||v||_SD^2`.
    pub min_ratio: f64,
    /// Trials with `v^T A v < ||v||_SD^2 / 2` beyond round-off.
    pub violations: usize,
}

impl CoercivityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Tests `a_SD(v, v) >= ||v||_SD^2 / 2` on random interior coefficient vectors.
pub fn coercivity_check(
    mesh: &ShishkinMesh,
    problem: &Problem,
    config: &StabilizationConfig,
    trials: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let system = assemble(mesh, problem, config)?;
    coercivity_check_system(mesh, problem, config, &system, trials, seed)
}

pub fn coercivity_check_system(
    mesh: &ShishkinMesh,
    problem: &Problem,
    config: &StabilizationConfig,
    system: &DiscreteSystem,
    trials: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..trials {
        let v: Vec<f64> = (0..system.dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let form = system.matrix.quadratic_form(&v)?;
        let fe = FEFunction::new(mesh, system.expand(&v));
        let sd = norm_parts(&fe, problem, config)?.sd_sq(problem.eps, problem.mu0);
        if sd == 0.0 {
            if form < 0.0 {
                violations += 1;
            }
            continue;
        }
        let ratio = form / sd;
        min_ratio = min_ratio.min(ratio);
        if form < 0.5 * sd - 1e-12 * sd {
            violations += 1;
        }
    }
    Ok(CoercivityReport {
        trials,
        min_ratio,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Layout, MeshParams};
    use crate::problems::BenchmarkProblem;

    fn unit_triangle() -> CellGeometry {
        CellGeometry::triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    }

    fn problem_with(eps: f64, b: f64, c: f64, f: Coefficient) -> Problem {
        Problem::new(
            eps,
            1.0,
            1.0,
            Arc::new(move |_| b),
            Arc::new(|_| 0.0),
            Arc::new(move |_| c),
            f,
        )
    }

    #[test]
    fn benchmark_deltas_by_region() {
        let cfg = crate::analysis::benchmark_delta_rule(24);
        assert_eq!(delta_for(&cfg, RegionTag::Smooth), 1.0 / 24.0);
        assert_eq!(delta_for(&cfg, RegionTag::ExponentialLayer), 0.0);
        assert_eq!(delta_for(&cfg, RegionTag::Corner), 0.0);
        assert!((delta_for(&cfg, RegionTag::CharacteristicLayer) - 8.505e-3).abs() < 1e-6);
    }

    #[test]
    fn p1_laplacian() {
        let p = problem_with(1.0, 0.0, 0.0, Arc::new(|_| 0.0));
        let a = local_matrix(&unit_triangle(), &p, 0.0).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for r in 0..3 {
            for s in 0..3 {
                assert!((a.get(r, s) - expected[r][s]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pure_convection_matrix() {
        // entries are ∫ φ_s,x φ_r = (∂xφ_s) |K| / 3, so every row sums to 0
        let p = problem_with(0.0, 1.0, 0.0, Arc::new(|_| 0.0));
        let a = local_matrix(&unit_triangle(), &p, 0.0).unwrap();
        let dx = [-1.0, 1.0, 0.0];
        for r in 0..3 {
            let row_sum: f64 = (0..3).map(|s| a.get(r, s)).sum();
            assert!(row_sum.abs() < 1e-15);
            for s in 0..3 {
                assert!((a.get(r, s) - dx[s] / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_coefficients_give_zero_matrix() {
        let p = problem_with(0.0, 0.0, 0.0, Arc::new(|_| 0.0));
        let quad = CellGeometry::quad([[0.0, 0.0], [0.3, 0.0], [0.3, 0.2], [0.0, 0.2]]);
        for g in [unit_triangle(), quad] {
            let a = local_matrix(&g, &p, 0.7).unwrap();
            assert!(a.data.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn constant_source_load() {
        let p = problem_with(1.0, 1.0, 1.0, Arc::new(|_| 1.0));
        let tri = CellGeometry::triangle([[0.0, 0.0], [0.5, 0.0], [0.0, 0.3]]);
        let l = local_rhs(&tri, &p, 0.0).unwrap();
        let area = 0.5 * 0.5 * 0.3;
        for r in 0..3 {
            assert!((l.data[r] - area / 3.0).abs() < 1e-16);
        }
        let quad = CellGeometry::quad([[0.0, 0.0], [0.5, 0.0], [0.5, 0.3], [0.0, 0.3]]);
        let l = local_rhs(&quad, &p, 0.0).unwrap();
        for r in 0..4 {
            assert!((l.data[r] - 0.15 / 4.0).abs() < 1e-16);
        }
    }

    #[test]
    fn linear_source_load() {
        // ∫ x φ_r over the unit triangle: (1/24, 1/12, 1/24)
        let p = problem_with(1.0, 1.0, 1.0, Arc::new(|q: &Point| q.x));
        let l = local_rhs(&unit_triangle(), &p, 0.0).unwrap();
        let expected = [1.0 / 24.0, 1.0 / 12.0, 1.0 / 24.0];
        for r in 0..3 {
            assert!((l.data[r] - expected[r]).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_source_reported() {
        let p = problem_with(1.0, 1.0, 1.0, Arc::new(|_| f64::NAN));
        assert!(matches!(
            local_rhs(&unit_triangle(), &p, 0.0),
            Err(Error::NonFiniteSource { .. })
        ));
    }

    #[test]
    fn interior_dof_count() {
        let bench = BenchmarkProblem::new(1e-6, 2.0);
        let mesh = build_mesh(&MeshParams::new(12, 1e-6), Layout::Triangular).unwrap();
        let sys = assemble(&mesh, &bench.problem, &crate::analysis::benchmark_delta_rule(12)).unwrap();
        assert_eq!(sys.dofs(), 121);
        assert_eq!(sys.matrix.dim(), 121);
        assert_eq!(sys.eliminated.len(), 48);
        for i in 0..sys.dofs() {
            let (cols, _) = sys.matrix.row(i);
            for &c in cols {
                assert!(sys.matrix.position(c, i).is_some(), "pattern not symmetric");
            }
        }
    }

    #[test]
    fn zero_source_zero_rhs() {
        let mesh = build_mesh(&MeshParams::new(12, 1e-4), Layout::HybridI).unwrap();
        let p = Problem::constant(1e-4, 1.0, 1.0, 0.0);
        let sys = assemble(&mesh, &p, &StabilizationConfig::uniform(0.01)).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_above_bound_rejected() {
        let bench = BenchmarkProblem::new(1e-6, 2.0);
        let mesh = build_mesh(&MeshParams::new(12, 1e-6), Layout::Triangular).unwrap();
        let mut cfg = crate::analysis::benchmark_delta_rule(12);
        cfg.delta_s = 2.0 / 2.25;
        let err = assemble(&mesh, &bench.problem, &cfg).unwrap_err();
        assert!(matches!(err, Error::DeltaBound { region: RegionTag::Smooth, .. }));
        assert!(coercivity_check(&mesh, &bench.problem, &cfg, 10, 1).is_err());
        cfg.delta_s = -1.0;
        assert!(matches!(
            assemble(&mesh, &bench.problem, &cfg),
            Err(Error::NegativeDelta(_))
        ));
    }

    #[test]
    fn parallel_assembly_is_bitwise_identical() {
        let bench = BenchmarkProblem::new(1e-8, 2.0);
        let mesh = build_mesh(&MeshParams::new(24, 1e-8), Layout::HybridII).unwrap();
        let cfg = crate::analysis::benchmark_delta_rule(24);
        let a = assemble(&mesh, &bench.problem, &cfg).unwrap();
        let b = assemble_with(&mesh, &bench.problem, &cfg, AssemblyOptions { parallel: true }).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_eq!(a.rhs, b.rhs);
    }

    #[test]
    fn coercivity_on_random_vectors() {
        let bench = BenchmarkProblem::new(1e-6, 2.0);
        for layout in Layout::ALL {
            let mesh = build_mesh(&MeshParams::new(12, 1e-6), layout).unwrap();
            let cfg = crate::analysis::benchmark_delta_rule(12);
            let rep = coercivity_check(&mesh, &bench.problem, &cfg, 100, 3).unwrap();
            assert!(rep.passed(), "{layout}: min ratio {}", rep.min_ratio);
            assert!(rep.min_ratio >= 0.5);
        }
    }

    #[test]
    fn coercivity_zero_vector() {
        let bench = BenchmarkProblem::new(1e-6, 2.0);
        let mesh = build_mesh(&MeshParams::new(6, 1e-6), Layout::Triangular).unwrap();
        let cfg = crate::analysis::benchmark_delta_rule(6);
        let sys = assemble(&mesh, &bench.problem, &cfg).unwrap();
        let zero = vec![0.0; sys.dofs()];
        assert_eq!(sys.matrix.quadratic_form(&zero).unwrap(), 0.0);
        let fe = FEFunction::new(&mesh, sys.expand(&zero));
        assert_eq!(norm_parts(&fe, &bench.problem, &cfg).unwrap().sd_sq(1e-6, 2.0), 0.0);
    }

    #[test]
    fn hybrid1_matches_rectangular_inside_exponential_layer() {
        let bench = BenchmarkProblem::new(1e-6, 2.0);
        let params = MeshParams::new(24, 1e-6);
        let cfg = crate::analysis::benchmark_delta_rule(24);
        let rect = build_mesh(&params, Layout::Rectangular).unwrap();
        let hyb = build_mesh(&params, Layout::HybridI).unwrap();
        let a = assemble(&rect, &bench.problem, &cfg).unwrap();
        let b = assemble(&hyb, &bench.problem, &cfg).unwrap();
        let n = 24;
        let mut checked = 0;
        for row in 0..a.dofs() {
            let (i, j) = rect.node_grid_index(a.dof_to_node[row]);
            if i > n / 2 && j > n / 3 && j < 2 * n / 3 {
                assert_eq!(a.matrix.row(row), b.matrix.row(row));
                assert_eq!(a.rhs[row], b.rhs[row]);
                checked += 1;
            }
        }
        assert_eq!(checked, 11 * 7);
    }

    #[test]
    fn degree_four_and_five_rules_agree() {
        use crate::fem::quadrature_for;
        let bench = BenchmarkProblem::new(1e-6, 2.0);
        let mesh = build_mesh(&MeshParams::new(12, 1e-6), Layout::Triangular).unwrap();
        let r5 = quadrature_for(ElementKind::P1Tri, 5).unwrap();
        let p = &bench.problem;
        for cell in &mesh.cells {
            let geom = CellGeometry::of_cell(&mesh, cell);
            let delta = 0.05;
            let a4 = local_matrix(&geom, p, delta).unwrap();
            let mut a5 = [[0.0; 3]; 3];
            for (xi, w) in r5.iter() {
                let m = map_to_physical(&geom, xi).unwrap();
                let sh = shape_eval(ElementKind::P1Tri, xi);
                let g: Vec<[f64; 2]> = (0..3).map(|k| m.physical_gradient(sh.gradients[k])).collect();
                let b = p.b(&m.point);
                let c = p.c(&m.point);
                for r in 0..3 {
                    for s in 0..3 {
                        let d = p.eps * (g[s][0] * g[r][0] + g[s][1] * g[r][1]);
                        let t = (b * g[s][0] + c * sh.values[s]) * (sh.values[r] + delta * b * g[r][0]);
                        a5[r][s] += w * m.det * (d + t);
                    }
                }
            }
            let scale = a4.data.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
            for r in 0..3 {
                for s in 0..3 {
                    assert!((a4.get(r, s) - a5[r][s]).abs() <= 1e-13 * scale);
                }
            }
        }
    }
}

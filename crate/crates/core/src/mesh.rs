//! Shishkin tensor-product meshes and their cell layouts.
//!
//! The unit square is split at `x = 1 - lambda_x` and at `y = lambda_y`,
//! `y = 1 - lambda_y` into a coarse smooth region, a fine exponential-layer
//! strip next to the outflow boundary `x = 1`, and two fine
//! characteristic-layer strips along `y = 0` and `y = 1`. Every grid
//! rectangle is then either kept as a bilinear quadrilateral or split into two
//! triangles along the `(x_{i+1}, y_j)`–`(x_i, y_{j+1})` diagonal, depending
//! on the [`Layout`].
//!
//! For very small `eps` the fine widths in `x` drop below the spacing of
//! `f64` near `1.0`, so node coordinates alone cannot resolve the layer.
//! Each [`Grid1D`] therefore also stores the exact interval widths and the
//! distance of every grid line to the far boundary, and all geometry used by
//! assembly and error norms is expressed through those.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default transition constant.
pub const DEFAULT_RHO: f64 = 2.5;

/// A point of the unit square together with its distances to the far edges.
///
/// `x_rem = 1 - x` and `y_rem = 1 - y`, carried separately so that points
/// inside the outflow layer keep full relative precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub x_rem: f64,
    pub y_rem: f64,
}

impl Point {
    /// Builds a point from plain coordinates; the remainders are `1 - x`, `1 - y`.
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            x_rem: 1.0 - x,
            y_rem: 1.0 - y,
        }
    }

    /// Moves the point by `(dx, dy)`, updating the remainders consistently.
    pub fn offset(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            x_rem: self.x_rem - dx,
            y_rem: self.y_rem - dy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Number of intervals per direction. Must be a positive multiple of 6.
    pub n: usize,
    pub eps: f64,
    pub beta: f64,
    pub rho: f64,
}

impl MeshParams {
    /// Parameters with `beta = 1` and the default transition constant.
    pub fn new(n: usize, eps: f64) -> Self {
        Self {
            n,
            eps,
            beta: 1.0,
            rho: DEFAULT_RHO,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 6 || !self.n.is_multiple_of(6) {
            return Err(Error::InvalidParams(format!(
                "N must be divisible by 6 (got {})",
                self.n
            )));
        }
        for (name, value) in [("eps", self.eps), ("beta", self.beta), ("rho", self.rho)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive and finite (got {value})"
                )));
            }
        }
        Ok(())
    }

    /// True when `eps > min(1/N, ln^-6 N)`, i.e. outside the regime the
    /// supercloseness estimates are stated for.
    pub fn eps_assumption_violated(&self) -> bool {
        let n = self.n as f64;
        let ln_n = n.ln();
        self.eps > (1.0 / n).min(ln_n.powi(-6))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub capped_x: bool,
    pub capped_y: bool,
}

pub fn compute_transition_params(params: &MeshParams) -> Result<TransitionParams> {
    params.validate()?;
    let ln_n = (params.n as f64).ln();
    let raw_x = params.rho * (params.eps / params.beta) * ln_n;
    let raw_y = params.rho * params.eps.sqrt() * ln_n;
    let capped_x = raw_x >= 0.5;
    let capped_y = raw_y >= 0.25;
    Ok(TransitionParams {
        lambda_x: if capped_x { 0.5 } else { raw_x },
        lambda_y: if capped_y { 0.25 } else { raw_y },
        capped_x,
        capped_y,
    })
}

/// A piecewise uniform one-dimensional grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    coords: Vec<f64>,
    /// `1 - coords[i]`, computed from the band formulas rather than by subtraction.
    remainders: Vec<f64>,
    widths: Vec<f64>,
    /// Indices of the grid lines that separate bands, including both ends.
    band_edges: Vec<usize>,
}

impl Grid1D {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn remainders(&self) -> &[f64] {
        &self.remainders
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn band_edges(&self) -> &[usize] {
        &self.band_edges
    }

    pub fn intervals(&self) -> usize {
        self.widths.len()
    }

    /// Signed distance from grid line `from` to grid line `to`, summed from widths.
    pub fn span(&self, from: usize, to: usize) -> f64 {
        if to >= from {
            self.widths[from..to].iter().sum()
        } else {
            -self.widths[to..from].iter().sum::<f64>()
        }
    }
}

/// Builds the x- and y-grids for the given transition points.
pub fn build_grid(params: &MeshParams, transition: &TransitionParams) -> Result<(Grid1D, Grid1D)> {
    params.validate()?;
    let n = params.n;
    let nf = n as f64;
    let lx = transition.lambda_x;
    let ly = transition.lambda_y;

    let half = n / 2;
    let coarse_x = 2.0 * (1.0 - lx) / nf;
    let fine_x = 2.0 * lx / nf;
    let mut x = Grid1D {
        coords: Vec::with_capacity(n + 1),
        remainders: Vec::with_capacity(n + 1),
        widths: Vec::with_capacity(n),
        band_edges: vec![0, half, n],
    };
    for i in 0..=n {
        let (coord, rem) = if i < half {
            let c = 2.0 * i as f64 * (1.0 - lx) / nf;
            (c, 1.0 - c)
        } else if i == half {
            (1.0 - lx, lx)
        } else {
            let r = 2.0 * (n - i) as f64 * lx / nf;
            (1.0 - r, r)
        };
        x.coords.push(coord);
        x.remainders.push(rem);
        if i < n {
            x.widths.push(if i < half { coarse_x } else { fine_x });
        }
    }

    let third = n / 3;
    let fine_y = 3.0 * ly / nf;
    let coarse_y = 3.0 * (1.0 - 2.0 * ly) / nf;
    let mut y = Grid1D {
        coords: Vec::with_capacity(n + 1),
        remainders: Vec::with_capacity(n + 1),
        widths: Vec::with_capacity(n),
        band_edges: vec![0, third, 2 * third, n],
    };
    for j in 0..=n {
        let (coord, rem) = if j < third {
            let c = 3.0 * j as f64 * ly / nf;
            (c, 1.0 - c)
        } else if j == third {
            (ly, 1.0 - ly)
        } else if j < 2 * third {
            let jf = j as f64;
            let c = (3.0 * jf / nf - 1.0) - 3.0 * (2.0 * jf - nf) * ly / nf;
            (c, 1.0 - c)
        } else if j == 2 * third {
            (1.0 - ly, ly)
        } else {
            let r = 3.0 * (n - j) as f64 * ly / nf;
            (1.0 - r, r)
        };
        y.coords.push(coord);
        y.remainders.push(rem);
        if j < n {
            let fine = j < third || j >= 2 * third;
            y.widths.push(if fine { fine_y } else { coarse_y });
        }
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionTag {
    /// `[0, 1-lambda_x] x [lambda_y, 1-lambda_y]`
    #[serde(rename = "s")]
    Smooth,
    /// `[1-lambda_x, 1] x [lambda_y, 1-lambda_y]`
    #[serde(rename = "x")]
    ExponentialLayer,
    /// `[0, 1-lambda_x] x ([0, lambda_y] u [1-lambda_y, 1])`
    #[serde(rename = "y")]
    CharacteristicLayer,
    /// `[1-lambda_x, 1] x ([0, lambda_y] u [1-lambda_y, 1])`
    #[serde(rename = "xy")]
    Corner,
}

impl RegionTag {
    pub const ALL: [RegionTag; 4] = [
        RegionTag::Smooth,
        RegionTag::ExponentialLayer,
        RegionTag::CharacteristicLayer,
        RegionTag::Corner,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RegionTag::Smooth => "s",
            RegionTag::ExponentialLayer => "x",
            RegionTag::CharacteristicLayer => "y",
            RegionTag::Corner => "xy",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Omega_{}", self.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    /// Vertices `(x_i,y_j), (x_{i+1},y_j), (x_i,y_{j+1})`.
    #[serde(rename = "tri1")]
    Tri1,
    /// Vertices `(x_i,y_{j+1}), (x_{i+1},y_j), (x_{i+1},y_{j+1})`.
    #[serde(rename = "tri2")]
    Tri2,
    /// Counterclockwise from `(x_i,y_j)`.
    #[serde(rename = "quad")]
    Quad,
}

impl CellKind {
    pub fn vertex_count(self) -> usize {
        match self {
            CellKind::Tri1 | CellKind::Tri2 => 3,
            CellKind::Quad => 4,
        }
    }

    pub fn is_triangle(self) -> bool {
        !matches!(self, CellKind::Quad)
    }

    /// Vertex positions as (column, row) offsets within the parent grid rectangle.
    pub fn corner_offsets(self) -> &'static [(usize, usize)] {
        match self {
            CellKind::Tri1 => &[(0, 0), (1, 0), (0, 1)],
            CellKind::Tri2 => &[(0, 1), (1, 0), (1, 1)],
            CellKind::Quad => &[(0, 0), (1, 0), (1, 1), (0, 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub kind: CellKind,
    vertex_ids: [usize; 4],
    pub region: RegionTag,
    /// `(i, j)` of the parent grid rectangle `[x_i, x_{i+1}] x [y_j, y_{j+1}]`.
    pub grid_cell: (usize, usize),
}

impl Cell {
    pub fn vertices(&self) -> &[usize] {
        &self.vertex_ids[..self.kind.vertex_count()]
    }

    /// Mutable vertex access, used to build deliberately broken meshes in tests.
    pub fn vertices_mut(&mut self) -> &mut [usize] {
        let n = self.kind.vertex_count();
        &mut self.vertex_ids[..n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Triangular,
    Rectangular,
    /// Rectangles in the exponential layer, triangles elsewhere.
    #[serde(rename = "hybrid1")]
    HybridI,
    /// Triangles in the exponential layer, rectangles elsewhere.
    #[serde(rename = "hybrid2")]
    HybridII,
}

impl Layout {
    pub const ALL: [Layout; 4] = [
        Layout::Triangular,
        Layout::Rectangular,
        Layout::HybridI,
        Layout::HybridII,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Layout::Triangular => "triangular",
            Layout::Rectangular => "rectangular",
            Layout::HybridI => "hybrid1",
            Layout::HybridII => "hybrid2",
        }
    }

    fn uses_quad(self, region: RegionTag) -> bool {
        let in_x = region == RegionTag::ExponentialLayer;
        match self {
            Layout::Triangular => false,
            Layout::Rectangular => true,
            Layout::HybridI => in_x,
            Layout::HybridII => !in_x,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangular" => Ok(Layout::Triangular),
            "rectangular" => Ok(Layout::Rectangular),
            "hybrid1" => Ok(Layout::HybridI),
            "hybrid2" => Ok(Layout::HybridII),
            other => Err(Error::InvalidParams(format!("unknown layout '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShishkinMesh {
    pub params: MeshParams,
    pub transition: TransitionParams,
    pub layout: Layout,
    grid_x: Grid1D,
    grid_y: Grid1D,
    nodes: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    boundary: Vec<usize>,
    on_boundary: Vec<bool>,
}

/// Region of the grid rectangle `(i, j)` for an `n x n` Shishkin grid.
pub fn region_of(n: usize, i: usize, j: usize) -> RegionTag {
    let in_x = i >= n / 2;
    let in_y = j < n / 3 || j >= 2 * n / 3;
    match (in_x, in_y) {
        (false, false) => RegionTag::Smooth,
        (true, false) => RegionTag::ExponentialLayer,
        (false, true) => RegionTag::CharacteristicLayer,
        (true, true) => RegionTag::Corner,
    }
}

pub fn build_mesh(params: &MeshParams, layout: Layout) -> Result<ShishkinMesh> {
    let transition = compute_transition_params(params)?;
    let (grid_x, grid_y) = build_grid(params, &transition)?;
    let n = params.n;
    let stride = n + 1;

    let mut nodes = Vec::with_capacity(stride * stride);
    let mut boundary = Vec::with_capacity(4 * n);
    let mut on_boundary = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            let id = nodes.len();
            nodes.push([grid_x.coords[i], grid_y.coords[j]]);
            let b = i == 0 || i == n || j == 0 || j == n;
            on_boundary.push(b);
            if b {
                boundary.push(id);
            }
        }
    }

    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let region = region_of(n, i, j);
            let kinds: &[CellKind] = if layout.uses_quad(region) {
                &[CellKind::Quad]
            } else {
                &[CellKind::Tri1, CellKind::Tri2]
            };
            for &kind in kinds {
                let mut vertex_ids = [usize::MAX; 4];
                for (slot, &(di, dj)) in vertex_ids.iter_mut().zip(kind.corner_offsets()) {
                    *slot = (j + dj) * stride + i + di;
                }
                cells.push(Cell {
                    kind,
                    vertex_ids,
                    region,
                    grid_cell: (i, j),
                });
            }
        }
    }

    Ok(ShishkinMesh {
        params: *params,
        transition,
        layout,
        grid_x,
        grid_y,
        nodes,
        cells,
        boundary,
        on_boundary,
    })
}

impl ShishkinMesh {
    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn grid_x(&self) -> &Grid1D {
        &self.grid_x
    }

    pub fn grid_y(&self) -> &Grid1D {
        &self.grid_y
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    /// Grid indices `(i, j)` of a node; nodes are numbered lexicographically by `(j, i)`.
    pub fn node_grid_index(&self, node: usize) -> (usize, usize) {
        let stride = self.n() + 1;
        (node % stride, node / stride)
    }

    pub fn node_point(&self, node: usize) -> Point {
        let (i, j) = self.node_grid_index(node);
        Point {
            x: self.grid_x.coords[i],
            y: self.grid_y.coords[j],
            x_rem: self.grid_x.remainders[i],
            y_rem: self.grid_y.remainders[j],
        }
    }

    /// Lower-left corner of the parent grid rectangle of `cell`.
    pub fn cell_origin(&self, cell: &Cell) -> Point {
        let (i, j) = cell.grid_cell;
        self.node_point(j * (self.n() + 1) + i)
    }

    /// Position of every vertex of `cell` relative to its grid-rectangle origin.
    ///
    /// Offsets are assembled from interval widths, so they stay exact even
    /// where the absolute coordinates are not representable.
    pub fn vertex_offsets(&self, cell: &Cell) -> [[f64; 2]; 4] {
        let (ci, cj) = cell.grid_cell;
        let mut out = [[0.0; 2]; 4];
        for (slot, &v) in out.iter_mut().zip(cell.vertices()) {
            let (vi, vj) = self.node_grid_index(v);
            *slot = [self.grid_x.span(ci, vi), self.grid_y.span(cj, vj)];
        }
        out
    }

    /// Signed area of a cell from its vertex offsets (shoelace formula).
    pub fn signed_area(&self, cell: &Cell) -> f64 {
        let off = self.vertex_offsets(cell);
        let k = cell.kind.vertex_count();
        let mut twice = 0.0;
        for a in 0..k {
            let b = (a + 1) % k;
            twice += off[a][0] * off[b][1] - off[b][0] * off[a][1];
        }
        0.5 * twice
    }

    pub fn quad_count(&self) -> usize {
        self.cells.iter().filter(|c| c.kind == CellKind::Quad).count()
    }

    pub fn triangle_count(&self) -> usize {
        self.cells.len() - self.quad_count()
    }

    pub fn to_json(&self) -> MeshJson {
        MeshJson {
            nodes: self.nodes.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| CellJson {
                    kind: c.kind,
                    v: c.vertices().to_vec(),
                    region: c.region,
                })
                .collect(),
            boundary: self.boundary.clone(),
            meta: MeshMeta {
                n: self.params.n,
                eps: self.params.eps,
                beta: self.params.beta,
                rho: self.params.rho,
                lambda_x: self.transition.lambda_x,
                lambda_y: self.transition.lambda_y,
                layout: self.layout,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellJson {
    pub kind: CellKind,
    pub v: Vec<usize>,
    pub region: RegionTag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshMeta {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
    pub beta: f64,
    pub rho: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub layout: Layout,
}

/// JSON export schema of a mesh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshJson {
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<CellJson>,
    pub boundary: Vec<usize>,
    pub meta: MeshMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationFailure {
    NonPositiveArea { cell: usize, area: f64 },
    NonConformingEdge { a: usize, b: usize, count: usize },
    NonPositiveWidth { axis: char, interval: usize },
    DecreasingCoordinate { axis: char, index: usize },
    TotalArea { area: f64 },
    BadVertex { cell: usize, node: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub failures: Vec<ValidationFailure>,
    pub total_area: f64,
    /// Indexed by [`RegionTag::index`].
    pub region_areas: [f64; 4],
    pub region_cells: [usize; 4],
    pub triangles: usize,
    pub quads: usize,
    pub interior_edges: usize,
    pub boundary_edges: usize,
    /// Adjacent grid lines whose `f64` coordinates coincide although their
    /// interval width is positive (fine layer below machine resolution).
    pub unresolved_coordinates: usize,
    pub eps_assumption_violated: bool,
    pub capped_x: bool,
    pub capped_y: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn region_area(&self, tag: RegionTag) -> f64 {
        self.region_areas[tag.index()]
    }
}

pub fn validate_mesh(mesh: &ShishkinMesh) -> ValidationReport {
    let mut failures = Vec::new();
    let mut unresolved = 0;
    for (axis, grid) in [('x', &mesh.grid_x), ('y', &mesh.grid_y)] {
        for (i, &w) in grid.widths.iter().enumerate() {
            if !(w > 0.0) {
                failures.push(ValidationFailure::NonPositiveWidth { axis, interval: i });
            }
        }
        for (i, pair) in grid.coords.windows(2).enumerate() {
            if pair[1] < pair[0] {
                failures.push(ValidationFailure::DecreasingCoordinate { axis, index: i + 1 });
            } else if pair[1] == pair[0] {
                unresolved += 1;
            }
        }
    }

    let node_count = mesh.node_count();
    let mut total_area = 0.0;
    let mut region_areas = [0.0; 4];
    let mut region_cells = [0usize; 4];
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for (idx, cell) in mesh.cells.iter().enumerate() {
        let verts = cell.vertices();
        if let Some(&bad) = verts.iter().find(|&&v| v >= node_count) {
            failures.push(ValidationFailure::BadVertex { cell: idx, node: bad });
            continue;
        }
        let area = mesh.signed_area(cell);
        if !(area > 0.0) {
            failures.push(ValidationFailure::NonPositiveArea { cell: idx, area });
        }
        total_area += area;
        region_areas[cell.region.index()] += area;
        region_cells[cell.region.index()] += 1;
        for k in 0..verts.len() {
            let a = verts[k];
            let b = verts[(k + 1) % verts.len()];
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }

    let n = mesh.n();
    let mut interior_edges = 0;
    let mut boundary_edges = 0;
    let on_same_side = |a: usize, b: usize| {
        let (ai, aj) = mesh.node_grid_index(a);
        let (bi, bj) = mesh.node_grid_index(b);
        (ai == bi && (ai == 0 || ai == n)) || (aj == bj && (aj == 0 || aj == n))
    };
    let mut sorted: Vec<_> = edges.into_iter().collect();
    sorted.sort_unstable();
    for ((a, b), count) in sorted {
        match count {
            2 if !on_same_side(a, b) => interior_edges += 1,
            1 if on_same_side(a, b) => boundary_edges += 1,
            _ => failures.push(ValidationFailure::NonConformingEdge { a, b, count }),
        }
    }

    if (total_area - 1.0).abs() > 1e-12 {
        failures.push(ValidationFailure::TotalArea { area: total_area });
    }

    ValidationReport {
        failures,
        total_area,
        region_areas,
        region_cells,
        triangles: mesh.triangle_count(),
        quads: mesh.quad_count(),
        interior_edges,
        boundary_edges,
        unresolved_coordinates: unresolved,
        eps_assumption_violated: mesh.params.eps_assumption_violated(),
        capped_x: mesh.transition.capped_x,
        capped_y: mesh.transition.capped_y,
    }
}

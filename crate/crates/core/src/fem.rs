//! Reference elements, quadrature rules and the reference-to-physical map.
//!
//! Reference triangle: vertices `(0,0), (1,0), (0,1)`. Reference quad: `[-1,1]^2`
//! with vertices counterclockwise from `(-1,-1)`.

use crate::error::{Error, Result};
use crate::mesh::{Cell, CellKind, Point, ShishkinMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    P1Tri,
    Q1Quad,
}

impl ElementKind {
    pub fn node_count(self) -> usize {
        match self {
            ElementKind::P1Tri => 3,
            ElementKind::Q1Quad => 4,
        }
    }

    /// Measure of the reference element.
    pub fn reference_measure(self) -> f64 {
        match self {
            ElementKind::P1Tri => 0.5,
            ElementKind::Q1Quad => 4.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ElementKind::P1Tri => "P1 triangle",
            ElementKind::Q1Quad => "Q1 quadrilateral",
        }
    }
}

impl From<CellKind> for ElementKind {
    fn from(kind: CellKind) -> Self {
        if kind.is_triangle() {
            ElementKind::P1Tri
        } else {
            ElementKind::Q1Quad
        }
    }
}

/// Shape function values and reference gradients at one point.
/// Entries beyond `kind.node_count()` are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValues {
    pub values: [f64; 4],
    pub gradients: [[f64; 2]; 4],
}

pub fn shape_eval(kind: ElementKind, reference: [f64; 2]) -> ShapeValues {
    let [s, t] = reference;
    match kind {
        ElementKind::P1Tri => ShapeValues {
            values: [1.0 - s - t, s, t, 0.0],
            gradients: [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
        },
        ElementKind::Q1Quad => {
            const SIGNS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
            let mut values = [0.0; 4];
            let mut gradients = [[0.0; 2]; 4];
            for (k, [sx, sy]) in SIGNS.iter().enumerate() {
                let fx = 1.0 + sx * s;
                let fy = 1.0 + sy * t;
                values[k] = 0.25 * fx * fy;
                gradients[k] = [0.25 * sx * fy, 0.25 * fx * sy];
            }
            ShapeValues { values, gradients }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for k in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // Legendre recurrence: p1 = P_n(x), p0 = P_{n-1}(x)
            let (mut p0, mut p1) = (0.0, 1.0);
            for m in 1..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn tensor_gauss(n: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    QuadratureRule {
        points,
        weights,
        exact_degree: 2 * n - 1,
    }
}

/// Symmetric triangle rule from orbits of barycentric coordinates with
/// weights normalised to a unit-area triangle.
fn symmetric_triangle(orbits: &[(f64, [f64; 3])], exact_degree: usize) -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(w, [a, b, c]) in orbits {
        let mut perms = vec![[a, b, c], [b, c, a], [c, a, b], [a, c, b], [c, b, a], [b, a, c]];
        perms.sort_by(|p, q| p.partial_cmp(q).unwrap());
        perms.dedup();
        for [l1, l2, _] in perms {
            points.push([l1, l2]);
            weights.push(0.5 * w);
        }
    }
    QuadratureRule {
        points,
        weights,
        exact_degree,
    }
}

fn triangle_rule(degree: usize) -> QuadratureRule {
    const THIRD: f64 = 1.0 / 3.0;
    match degree {
        1 => symmetric_triangle(&[(1.0, [THIRD; 3])], 1),
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            symmetric_triangle(&[(THIRD, [a, b, b])], 2)
        }
        3 | 4 => {
            let (a1, b1) = (0.108_103_018_168_070, 0.445_948_490_915_965);
            let (a2, b2) = (0.816_847_572_980_459, 0.091_576_213_509_771);
            symmetric_triangle(
                &[
                    (0.223_381_589_678_011, [a1, b1, b1]),
                    (0.109_951_743_655_322, [a2, b2, b2]),
                ],
                4,
            )
        }
        5 => {
            let (a1, b1) = (0.059_715_871_789_770, 0.470_142_064_105_115);
            let (a2, b2) = (0.797_426_985_353_087, 0.101_286_507_323_456);
            symmetric_triangle(
                &[
                    (0.225, [THIRD; 3]),
                    (0.132_394_152_788_506, [a1, b1, b1]),
                    (0.125_939_180_544_827, [a2, b2, b2]),
                ],
                5,
            )
        }
        _ => {
            let (a1, b1) = (0.501_426_509_658_179, 0.249_286_745_170_910);
            let (a2, b2) = (0.873_821_971_016_996, 0.063_089_014_491_502);
            let (a3, b3, c3) = (0.053_145_049_844_817, 0.310_352_451_033_784, 0.636_502_499_121_399);
            symmetric_triangle(
                &[
                    (0.116_786_275_726_379, [a1, b1, b1]),
                    (0.050_844_906_370_207, [a2, b2, b2]),
                    (0.082_851_075_618_374, [a3, b3, c3]),
                ],
                6,
            )
        }
    }
}

/// Quadrature rule exact for polynomials up to `requested_degree` (1..=6).
pub fn quadrature_for(kind: ElementKind, requested_degree: usize) -> Result<QuadratureRule> {
    if !(1..=6).contains(&requested_degree) {
        return Err(Error::UnsupportedQuadrature {
            element: kind.name(),
            degree: requested_degree,
        });
    }
    Ok(match kind {
        ElementKind::P1Tri => triangle_rule(requested_degree),
        ElementKind::Q1Quad => tensor_gauss((requested_degree + 2) / 2),
    })
}

/// Rule used for assembly and norms: degree 4 on triangles, 3x3 Gauss on quads.
pub fn assembly_rule(kind: ElementKind) -> QuadratureRule {
    match kind {
        ElementKind::P1Tri => triangle_rule(4),
        ElementKind::Q1Quad => tensor_gauss(3),
    }
}

/// Geometry of one cell: an anchor point plus vertex offsets relative to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub kind: ElementKind,
    pub origin: Point,
    pub offsets: [[f64; 2]; 4],
}

impl CellGeometry {
    pub fn triangle(vertices: [[f64; 2]; 3]) -> Self {
        let origin = Point::new(vertices[0][0], vertices[0][1]);
        let mut offsets = [[0.0; 2]; 4];
        for (o, v) in offsets.iter_mut().zip(&vertices) {
            *o = [v[0] - vertices[0][0], v[1] - vertices[0][1]];
        }
        Self {
            kind: ElementKind::P1Tri,
            origin,
            offsets,
        }
    }

    pub fn quad(vertices: [[f64; 2]; 4]) -> Self {
        let origin = Point::new(vertices[0][0], vertices[0][1]);
        let mut offsets = [[0.0; 2]; 4];
        for (o, v) in offsets.iter_mut().zip(&vertices) {
            *o = [v[0] - vertices[0][0], v[1] - vertices[0][1]];
        }
        Self {
            kind: ElementKind::Q1Quad,
            origin,
            offsets,
        }
    }

    pub fn of_cell(mesh: &ShishkinMesh, cell: &Cell) -> Self {
        Self {
            kind: cell.kind.into(),
            origin: mesh.cell_origin(cell),
            offsets: mesh.vertex_offsets(cell),
        }
    }
}

/// Reference-to-physical map evaluated at one reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPoint {
    pub point: Point,
    /// `jacobian[r][c] = d x_r / d xi_c`.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    /// Inverse transpose of the Jacobian; maps reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
}

impl MappedPoint {
    pub fn physical_gradient(&self, reference_grad: [f64; 2]) -> [f64; 2] {
        let m = &self.inv_t;
        [
            m[0][0] * reference_grad[0] + m[0][1] * reference_grad[1],
            m[1][0] * reference_grad[0] + m[1][1] * reference_grad[1],
        ]
    }
}

pub fn map_to_physical(geom: &CellGeometry, reference: [f64; 2]) -> Result<MappedPoint> {
    let shape = shape_eval(geom.kind, reference);
    let n = geom.kind.node_count();
    let mut dx = 0.0;
    let mut dy = 0.0;
    let mut jac = [[0.0; 2]; 2];
    for k in 0..n {
        let [ox, oy] = geom.offsets[k];
        dx += shape.values[k] * ox;
        dy += shape.values[k] * oy;
        for c in 0..2 {
            jac[0][c] += ox * shape.gradients[k][c];
            jac[1][c] += oy * shape.gradients[k][c];
        }
    }
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if !(det > 0.0) {
        return Err(Error::DegenerateCell { cell: usize::MAX, det });
    }
    let inv_t = [
        [jac[1][1] / det, -jac[1][0] / det],
        [-jac[0][1] / det, jac[0][0] / det],
    ];
    Ok(MappedPoint {
        point: geom.origin.offset(dx, dy),
        jacobian: jac,
        det,
        inv_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Closed-form integral of `s^a t^b` over the reference triangle.
    fn triangle_monomial(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    /// Closed-form integral of `s^a t^b` over `[-1, 1]^2`.
    fn square_monomial(a: u32, b: u32) -> f64 {
        let one_d = |k: u32| if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
        one_d(a) * one_d(b)
    }

    #[test]
    fn p1_nodal_values() {
        let s = shape_eval(ElementKind::P1Tri, [0.0, 0.0]);
        assert_eq!(&s.values[..3], &[1.0, 0.0, 0.0]);
        let s = shape_eval(ElementKind::P1Tri, [1.0 / 3.0, 1.0 / 3.0]);
        for v in &s.values[..3] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let gx: f64 = s.gradients.iter().map(|g| g[0]).sum();
        let gy: f64 = s.gradients.iter().map(|g| g[1]).sum();
        assert_eq!((gx, gy), (0.0, 0.0));
    }

    #[test]
    fn q1_center_and_nodes() {
        let s = shape_eval(ElementKind::Q1Quad, [0.0, 0.0]);
        assert_eq!(s.values, [0.25; 4]);
        let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
        for (k, c) in corners.iter().enumerate() {
            let s = shape_eval(ElementKind::Q1Quad, *c);
            for m in 0..4 {
                assert_eq!(s.values[m], if m == k { 1.0 } else { 0.0 });
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let tri = [a * (1.0 - b), b * (1.0 - a) * 0.999];
            let quad = [2.0 * a - 1.0, 2.0 * b - 1.0];
            for (kind, p) in [(ElementKind::P1Tri, tri), (ElementKind::Q1Quad, quad)] {
                let s = shape_eval(kind, p);
                let n = kind.node_count();
                let sum: f64 = s.values[..n].iter().sum();
                let gx: f64 = s.gradients[..n].iter().map(|g| g[0]).sum();
                let gy: f64 = s.gradients[..n].iter().map(|g| g[1]).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-14);
                prop_assert!(gx.abs() <= 1e-14 && gy.abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn centroid_rule_and_gauss_2x2() {
        let r = quadrature_for(ElementKind::P1Tri, 1).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.points[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r.weights[0] - 0.5).abs() < 1e-15);
        let r = quadrature_for(ElementKind::Q1Quad, 3).unwrap();
        assert_eq!(r.len(), 4);
        for w in &r.weights {
            assert!((w - 1.0).abs() < 1e-15);
        }
        assert!((r.points[0][0] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_unsupported_degree() {
        assert!(quadrature_for(ElementKind::P1Tri, 0).is_err());
        assert!(quadrature_for(ElementKind::Q1Quad, 7).is_err());
    }

    #[test]
    fn x3y2_on_reference_triangle() {
        let r = quadrature_for(ElementKind::P1Tri, 5).unwrap();
        let got: f64 = r.iter().map(|([s, t], w)| w * s.powi(3) * t * t).sum();
        assert!((got - 1.0 / 420.0).abs() <= 1e-13 / 420.0);
        assert!((triangle_monomial(3, 2) - 1.0 / 420.0).abs() < 1e-18);
    }

    #[test]
    fn every_rule_exact_to_advertised_degree() {
        for degree in 1..=6 {
            for kind in [ElementKind::P1Tri, ElementKind::Q1Quad] {
                let rule = quadrature_for(kind, degree).unwrap();
                assert!(rule.exact_degree >= degree);
                let wsum: f64 = rule.weights.iter().sum();
                assert!((wsum - kind.reference_measure()).abs() < 1e-14);
                for total in 0..=rule.exact_degree as u32 {
                    for a in 0..=total {
                        let b = total - a;
                        let got: f64 =
                            rule.iter().map(|([s, t], w)| w * s.powi(a as i32) * t.powi(b as i32)).sum();
                        let exact = match kind {
                            ElementKind::P1Tri => triangle_monomial(a, b),
                            ElementKind::Q1Quad => square_monomial(a, b),
                        };
                        let scale = exact.abs().max(1e-3);
                        assert!(
                            (got - exact).abs() <= 1e-13 * scale,
                            "{kind:?} deg {degree}: s^{a} t^{b}: {got} vs {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_known_values() {
        let (x, w) = gauss_legendre(3);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
    }

    #[test]
    fn unit_triangle_map() {
        let g = CellGeometry::triangle([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let m = map_to_physical(&g, [1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!((m.point.x - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.point.y - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.det, 1.0);
    }

    #[test]
    fn rectangle_map() {
        let g = CellGeometry::quad([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]);
        let m = map_to_physical(&g, [0.0, 0.0]).unwrap();
        assert_eq!((m.point.x, m.point.y), (1.0, 0.5));
        assert_eq!(m.det, 0.5);
        assert_eq!(m.jacobian[0][1], 0.0);
        assert_eq!(m.jacobian[1][0], 0.0);
    }

    #[test]
    fn degenerate_cell_rejected() {
        let g = CellGeometry::triangle([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(
            map_to_physical(&g, [0.2, 0.2]),
            Err(Error::DegenerateCell { .. })
        ));
    }

    #[test]
    fn mesh_triangle_area_matches_shoelace() {
        use crate::mesh::{build_mesh, Layout, MeshParams};
        let mesh = build_mesh(&MeshParams::new(12, 1e-6), Layout::Triangular).unwrap();
        let cell = &mesh.cells[0];
        assert_eq!(cell.kind, CellKind::Tri1);
        let g = CellGeometry::of_cell(&mesh, cell);
        let m = map_to_physical(&g, [0.25, 0.25]).unwrap();
        let p: Vec<[f64; 2]> = cell.vertices().iter().map(|&v| mesh.nodes()[v]).collect();
        let shoelace = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        let hx = mesh.grid_x().widths()[0];
        let hy = mesh.grid_y().widths()[0];
        assert!((0.5 * m.det - shoelace).abs() <= 1e-12 * shoelace);
        assert!((0.5 * m.det - 0.5 * hx * hy).abs() <= 1e-15 * shoelace);
    }
}

use thiserror::Error;

use crate::linalg::SolveStats;
use crate::mesh::RegionTag;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate cell {cell}: Jacobian determinant {det:e}")]
    DegenerateCell { cell: usize, det: f64 },

    #[error("source term is not finite at ({x}, {y})")]
    NonFiniteSource { x: f64, y: f64 },

    #[error(
        "stabilization parameter for region {region} is {delta:e}, above the coercivity bound \
         mu0 / (2 ||c||^2) = {bound:e}"
    )]
    DeltaBound {
        region: RegionTag,
        delta: f64,
        bound: f64,
    },

    #[error("negative stabilization parameter {0:e}")]
    NegativeDelta(f64),

    #[error("no quadrature rule of degree {degree} for {element}")]
    UnsupportedQuadrature { element: &'static str, degree: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero pivot in ILU(0) at row {row}")]
    ZeroPivot { row: usize },

    #[error("zero diagonal entry at row {row}")]
    ZeroDiagonal { row: usize },

    #[error("invalid solver settings: {0}")]
    SolverSettings(String),

    #[error(
        "GMRES did not converge: {} iterations, relative residual {:e}",
        .0.iterations,
        .0.relative_residual
    )]
    NotConverged(SolveStats),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

//! Streamline-diffusion finite elements on Shishkin meshes for
//! singularly perturbed convection-diffusion problems whose solutions have an
//! exponential outflow layer and two characteristic layers.
//!
//! The crate builds layer-adapted meshes with triangular, rectangular or mixed
//! cells, assembles the stabilized Galerkin system, solves it with
//! preconditioned GMRES and measures the distance between the discrete
//! solution and the nodal interpolant of a known exact solution.

pub mod analysis;
pub mod assembly;
pub mod check;
pub mod cli;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod problems;

pub use analysis::{
    run_study, supercloseness_error, ConvergenceTable, ErrorRecord, FEFunction, RunConfig, StudyResult,
};
pub use assembly::{assemble, DiscreteSystem, Problem, StabilizationConfig};
pub use error::{Error, Result};
pub use mesh::{build_mesh, Layout, MeshParams, RegionTag, ShishkinMesh};
pub use problems::{BenchmarkProblem, ExactSolution};

//! Sparse storage and the Krylov solver.

mod gmres;
mod precond;
mod sparse;

pub use gmres::{gmres, relative_residual, GmresSettings, SolveStats};
pub use precond::{build_preconditioner, Ilu0, PrecondKind, Precond, Preconditioner};
pub use sparse::{dot, norm2, CsrMatrix};

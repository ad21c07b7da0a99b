//! C interface to `layerfem`.
//!
//! Meshes and solutions are opaque handles created by `lf_*_new`/`lf_solve`
//! and released with the matching `lf_*_free`. Every fallible call returns a
//! status code; on failure `lf_last_error` describes the cause. No Rust panic
//! crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use layerfem::analysis::{solve_benchmark, RunConfig};
use layerfem::mesh::{build_mesh, validate_mesh, Layout, MeshParams, ShishkinMesh};
use layerfem::Error;

pub const LF_OK: i32 = 0;
pub const LF_ERR_NULL: i32 = 1;
pub const LF_ERR_INVALID: i32 = 2;
pub const LF_ERR_SOLVER: i32 = 3;
pub const LF_ERR_RANGE: i32 = 4;
pub const LF_ERR_INTERNAL: i32 = 5;

pub const LF_LAYOUT_TRIANGULAR: u32 = 0;
pub const LF_LAYOUT_RECTANGULAR: u32 = 1;
pub const LF_LAYOUT_HYBRID1: u32 = 2;
pub const LF_LAYOUT_HYBRID2: u32 = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> i32 {
    match e {
        Error::NotConverged(_) | Error::ZeroPivot { .. } | Error::ZeroDiagonal { .. } => LF_ERR_SOLVER,
        _ => LF_ERR_INVALID,
    }
}

fn guard(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal error (panic)");
            LF_ERR_INTERNAL
        }
    }
}

fn layout_of(code: u32) -> Option<Layout> {
    match code {
        LF_LAYOUT_TRIANGULAR => Some(Layout::Triangular),
        LF_LAYOUT_RECTANGULAR => Some(Layout::Rectangular),
        LF_LAYOUT_HYBRID1 => Some(Layout::HybridI),
        LF_LAYOUT_HYBRID2 => Some(Layout::HybridII),
        _ => None,
    }
}

fn layout_code(layout: Layout) -> u32 {
    match layout {
        Layout::Triangular => LF_LAYOUT_TRIANGULAR,
        Layout::Rectangular => LF_LAYOUT_RECTANGULAR,
        Layout::HybridI => LF_LAYOUT_HYBRID1,
        Layout::HybridII => LF_LAYOUT_HYBRID2,
    }
}

/// Opaque mesh handle.
pub struct LfMesh {
    mesh: ShishkinMesh,
}

/// Opaque handle to a solved benchmark instance.
pub struct LfSolution {
    solution: Vec<f64>,
    record: LfErrorRecord,
}

/// Errors of one run, `u^I - u^N` in the energy and SD norms.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LfErrorRecord {
    pub layout: u32,
    pub n: usize,
    pub eps: f64,
    pub mu0: f64,
    pub e_eps: f64,
    pub e_sd: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solver and norm options. Obtain defaults from `lf_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfOptions {
    pub mu0: f64,
    pub tol: f64,
    pub restart: usize,
    pub max_outer: usize,
}

impl From<LfOptions> for RunConfig {
    fn from(o: LfOptions) -> Self {
        let mut cfg = RunConfig {
            mu0: o.mu0,
            ..RunConfig::default()
        };
        cfg.solver.tol = o.tol;
        cfg.solver.restart = o.restart;
        cfg.solver.max_outer = o.max_outer;
        cfg
    }
}

/// Message describing the last failure on this thread. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn lf_options_default() -> LfOptions {
    let cfg = RunConfig::default();
    LfOptions {
        mu0: cfg.mu0,
        tol: cfg.solver.tol,
        restart: cfg.solver.restart,
        max_outer: cfg.solver.max_outer,
    }
}

/// Builds a Shishkin mesh with `beta = 1`, `rho = 2.5`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_new(n: usize, eps: f64, layout: u32, out: *mut *mut LfMesh) -> i32 {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return LF_ERR_NULL;
        }
        *out = ptr::null_mut();
        let Some(layout) = layout_of(layout) else {
            set_error(format!("unknown layout code {layout}"));
            return LF_ERR_INVALID;
        };
        match build_mesh(&MeshParams::new(n, eps), layout) {
            Ok(mesh) => {
                *out = Box::into_raw(Box::new(LfMesh { mesh }));
                LF_OK
            }
            Err(e) => {
                set_error(e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `mesh` must be null or a handle from `lf_mesh_new` not freed before.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_free(mesh: *mut LfMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_node_count(mesh: *const LfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.node_count())
}

/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_cell_count(mesh: *const LfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.mesh.cells.len())
}

/// Transition points `lambda_x`, `lambda_y`.
///
/// # Safety
/// `mesh` must be a live handle; `lambda_x` and `lambda_y` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_transition(mesh: *const LfMesh, lambda_x: *mut f64, lambda_y: *mut f64) -> i32 {
    guard(|| {
        let (Some(m), false, false) = (mesh.as_ref(), lambda_x.is_null(), lambda_y.is_null()) else {
            set_error("null pointer");
            return LF_ERR_NULL;
        };
        *lambda_x = m.mesh.transition.lambda_x;
        *lambda_y = m.mesh.transition.lambda_y;
        LF_OK
    })
}

/// Coordinates of node `index`.
///
/// # Safety
/// `mesh` must be a live handle; `x` and `y` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_node(mesh: *const LfMesh, index: usize, x: *mut f64, y: *mut f64) -> i32 {
    guard(|| {
        let (Some(m), false, false) = (mesh.as_ref(), x.is_null(), y.is_null()) else {
            set_error("null pointer");
            return LF_ERR_NULL;
        };
        let Some(&[px, py]) = m.mesh.nodes().get(index) else {
            set_error(format!("node {index} out of range"));
            return LF_ERR_RANGE;
        };
        *x = px;
        *y = py;
        LF_OK
    })
}

/// Returns `LF_OK` when the mesh passes conformity and area validation.
///
/// # Safety
/// `mesh` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_validate(mesh: *const LfMesh) -> i32 {
    guard(|| {
        let Some(m) = mesh.as_ref() else {
            set_error("null mesh");
            return LF_ERR_NULL;
        };
        let report = validate_mesh(&m.mesh);
        if report.passed() {
            LF_OK
        } else {
            set_error(format!("{:?}", report.failures));
            LF_ERR_INVALID
        }
    })
}

/// Mesh as a JSON document. Release the string with `lf_string_free`.
///
/// # Safety
/// `mesh` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lf_mesh_to_json(mesh: *const LfMesh, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let (Some(m), false) = (mesh.as_ref(), out.is_null()) else {
            set_error("null pointer");
            return LF_ERR_NULL;
        };
        match serde_json::to_string(&m.mesh.to_json()) {
            Ok(s) => {
                *out = CString::new(s).expect("JSON has no NUL").into_raw();
                LF_OK
            }
            Err(e) => {
                set_error(e.to_string());
                LF_ERR_INTERNAL
            }
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not freed before.
#[no_mangle]
pub unsafe extern "C" fn lf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Solves the built-in benchmark once. `options` may be null for defaults.
/// A solution handle is returned even when GMRES does not converge, together
/// with `LF_ERR_SOLVER`.
///
/// # Safety
/// `options` must be null or point to a valid `LfOptions`; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lf_solve(
    n: usize,
    eps: f64,
    layout: u32,
    options: *const LfOptions,
    out: *mut *mut LfSolution,
) -> i32 {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return LF_ERR_NULL;
        }
        *out = ptr::null_mut();
        let Some(layout) = layout_of(layout) else {
            set_error(format!("unknown layout code {layout}"));
            return LF_ERR_INVALID;
        };
        let opts = options.as_ref().copied().unwrap_or_else(|| lf_options_default());
        let cfg = RunConfig::from(opts);
        let run = match solve_benchmark(n, eps, layout, &cfg) {
            Ok(r) => r,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        let parts = match run.error_parts() {
            Ok(p) => p,
            Err(e) => {
                set_error(e.to_string());
                return status_of(&e);
            }
        };
        let record = LfErrorRecord {
            layout: layout_code(layout),
            n,
            eps,
            mu0: cfg.mu0,
            e_eps: parts.energy_sq(eps, cfg.mu0).sqrt(),
            e_sd: parts.sd_sq(eps, cfg.mu0).sqrt(),
            iterations: run.stats.iterations,
            relative_residual: run.stats.relative_residual,
            converged: run.stats.converged,
        };
        let converged = run.stats.converged;
        *out = Box::into_raw(Box::new(LfSolution {
            solution: run.solution,
            record,
        }));
        if converged {
            LF_OK
        } else {
            set_error(Error::NotConverged(run.stats).to_string());
            LF_ERR_SOLVER
        }
    })
}

/// # Safety
/// `solution` must be null or a handle from `lf_solve` not freed before.
#[no_mangle]
pub unsafe extern "C" fn lf_solution_free(solution: *mut LfSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// # Safety
/// `solution` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lf_solution_record(solution: *const LfSolution, out: *mut LfErrorRecord) -> i32 {
    guard(|| {
        let (Some(s), false) = (solution.as_ref(), out.is_null()) else {
            set_error("null pointer");
            return LF_ERR_NULL;
        };
        *out = s.record;
        LF_OK
    })
}

/// Nodal values of the discrete solution in mesh node order. The array is
/// owned by the handle.
///
/// # Safety
/// `solution` must be a live handle; `values` and `len` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lf_solution_values(
    solution: *const LfSolution,
    values: *mut *const f64,
    len: *mut usize,
) -> i32 {
    guard(|| {
        let (Some(s), false, false) = (solution.as_ref(), values.is_null(), len.is_null()) else {
            set_error("null pointer");
            return LF_ERR_NULL;
        };
        *values = s.solution.as_ptr();
        *len = s.solution.len();
        LF_OK
    })
}

#ifndef LAYERFEM_H
#define LAYERFEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define LF_OK 0

#define LF_ERR_NULL 1

#define LF_ERR_INVALID 2

#define LF_ERR_SOLVER 3

#define LF_ERR_RANGE 4

#define LF_ERR_INTERNAL 5

#define LF_LAYOUT_TRIANGULAR 0

#define LF_LAYOUT_RECTANGULAR 1

#define LF_LAYOUT_HYBRID1 2

#define LF_LAYOUT_HYBRID2 3

/**
 * Opaque mesh handle.
 */
typedef struct LfMesh LfMesh;

/**
 * Opaque handle to a solved benchmark instance.
 */
typedef struct LfSolution LfSolution;

/**
 * Solver and norm options. Obtain defaults from `lf_options_default`.
 */
typedef struct {
  double mu0;
  double tol;
  size_t restart;
  size_t max_outer;
} LfOptions;

/**
 * Errors of one run, `u^I - u^N` in the energy and SD norms.
 */
typedef struct {
  uint32_t layout;
  size_t n;
  double eps;
  double mu0;
  double e_eps;
  double e_sd;
  size_t iterations;
  double relative_residual;
  bool converged;
} LfErrorRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread. Valid until the next
 * call into the library from the same thread.
 */
const char *lf_last_error(void);

LfOptions lf_options_default(void);

/**
 * Builds a Shishkin mesh with `beta = 1`, `rho = 2.5`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
int32_t lf_mesh_new(size_t n, double eps, uint32_t layout, LfMesh **out);

/**
 * # Safety
 * `mesh` must be null or a handle from `lf_mesh_new` not freed before.
 */
void lf_mesh_free(LfMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t lf_mesh_node_count(const LfMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t lf_mesh_cell_count(const LfMesh *mesh);

/**
 * Transition points `lambda_x`, `lambda_y`.
 *
 * # Safety
 * `mesh` must be a live handle; `lambda_x` and `lambda_y` valid for writes.
 */
int32_t lf_mesh_transition(const LfMesh *mesh, double *lambda_x, double *lambda_y);

/**
 * Coordinates of node `index`.
 *
 * # Safety
 * `mesh` must be a live handle; `x` and `y` valid for writes.
 */
int32_t lf_mesh_node(const LfMesh *mesh, size_t index, double *x, double *y);

/**
 * Returns `LF_OK` when the mesh passes conformity and area validation.
 *
 * # Safety
 * `mesh` must be a live handle.
 */
int32_t lf_mesh_validate(const LfMesh *mesh);

/**
 * Mesh as a JSON document. Release the string with `lf_string_free`.
 *
 * # Safety
 * `mesh` must be a live handle; `out` valid for writes.
 */
int32_t lf_mesh_to_json(const LfMesh *mesh, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not freed before.
 */
void lf_string_free(char *s);

/**
 * Solves the built-in benchmark once. `options` may be null for defaults.
 * A solution handle is returned even when GMRES does not converge, together
 * with `LF_ERR_SOLVER`.
 *
 * # Safety
 * `options` must be null or point to a valid `LfOptions`; `out` valid for writes.
 */
int32_t lf_solve(size_t n, double eps, uint32_t layout, const LfOptions *options, LfSolution **out);

/**
 * # Safety
 * `solution` must be null or a handle from `lf_solve` not freed before.
 */
void lf_solution_free(LfSolution *solution);

/**
 * # Safety
 * `solution` must be a live handle; `out` valid for writes.
 */
int32_t lf_solution_record(const LfSolution *solution, LfErrorRecord *out);

/**
 * Nodal values of the discrete solution in mesh node order. The array is
 * owned by the handle.
 *
 * # Safety
 * `solution` must be a live handle; `values` and `len` valid for writes.
 */
int32_t lf_solution_values(const LfSolution *solution, const double **values, size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYERFEM_H */

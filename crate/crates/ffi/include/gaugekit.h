#ifndef GAUGEKIT_H
#define GAUGEKIT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_POINTER = 1,
  GK_STATUS_INVALID_ARGUMENT = 2,
  GK_STATUS_UNSUPPORTED = 3,
  GK_STATUS_MESH_MISMATCH = 4,
  GK_STATUS_DEGENERATE_KERNEL = 5,
  GK_STATUS_SINGULAR_SYSTEM = 6,
  GK_STATUS_INVARIANT_VIOLATION = 7,
  GK_STATUS_SERIES_DIVERGED = 8,
  GK_STATUS_CACHE_INVALID = 9,
  GK_STATUS_CONFIG = 10,
  GK_STATUS_IO = 11,
  /**
   * A run finished but at least one stage reported an error.
   */
  GK_STATUS_INCOMPLETE = 12,
  GK_STATUS_PANIC = 99,
} GkStatus;

typedef enum GkSolveStatus {
  GK_SOLVE_STATUS_CONVERGED = 0,
  GK_SOLVE_STATUS_DIVERGED = 1,
  GK_SOLVE_STATUS_ITERATION_CAP = 2,
} GkSolveStatus;

/**
 * Dense Green matrix bound to the mesh it was assembled on.
 */
typedef struct GkGreen GkGreen;

/**
 * Quadrature mesh on a model domain.
 */
typedef struct GkMesh GkMesh;

typedef struct GkSolveSummary {
  enum GkSolveStatus status;
  size_t iterations;
  /**
   * `sup |u - (Tu + Gq) - 1|`, NaN when no solution was produced.
   */
  double residual;
  double l1_norm;
  double center_value;
} GkSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *gk_version(void);

/**
 * Copies the last error message of this thread into `buf` with a trailing
 * NUL and returns the full message length in bytes (without the NUL).
 * Passing a null `buf` or `cap == 0` only queries the length.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t gk_last_error_message(char *buf, size_t cap);

/**
 * Builds a mesh. `domain` is 1 for the unit disk, 2 for the unit ball and
 * 3 for whole space, which also reads `truncation_radius`.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum GkStatus gk_mesh_new(uint32_t domain,
                          double truncation_radius,
                          size_t n_radial,
                          size_t n_angular,
                          struct GkMesh **out);

/**
 * # Safety
 * `mesh` must be null or a handle from [`gk_mesh_new`] not yet freed.
 */
void gk_mesh_free(struct GkMesh *mesh);

/**
 * Number of nodes, 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t gk_mesh_len(const struct GkMesh *mesh);

/**
 * Spatial dimension, 0 for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t gk_mesh_dim(const struct GkMesh *mesh);

/**
 * Writes node coordinates as `len * 3` doubles (z is 0 in the plane) and
 * the quadrature weights as `len` doubles. Either output may be null.
 *
 * # Safety
 * Non-null outputs must hold the stated number of doubles.
 */
enum GkStatus gk_mesh_nodes(const struct GkMesh *mesh, double *coords, double *weights);

/**
 * Assembles the Green matrix of the mesh (Newtonian kernel on whole space).
 *
 * # Safety
 * `mesh` must be a live handle and `out` a valid pointer.
 */
enum GkStatus gk_green_new(const struct GkMesh *mesh, struct GkGreen **out);

/**
 * # Safety
 * `green` must be null or a handle from [`gk_green_new`] not yet freed.
 */
void gk_green_free(struct GkGreen *green);

/**
 * `out = G f` where both arrays have one entry per mesh node.
 *
 * # Safety
 * Handles must be live; `f` and `out` must hold `len` doubles.
 */
enum GkStatus gk_green_apply(const struct GkMesh *mesh,
                             const struct GkGreen *green,
                             const double *f,
                             double *out,
                             size_t len);

/**
 * Gauge `u = 1 + G(qu)` by the Neumann series, with potential values `q`
 * at the mesh nodes. On whole space the potential must vanish near the
 * truncation sphere. A diverged or capped series is not an error: the
 * summary says so and `u` is filled with NaN.
 *
 * # Safety
 * Handles must be live; `q` and `u` must hold `len` doubles and `summary`
 * must be null or valid.
 */
enum GkStatus gk_gauge_solve(const struct GkMesh *mesh,
                             const struct GkGreen *green,
                             const double *q,
                             size_t len,
                             double tol_series,
                             size_t j_max,
                             double *u,
                             struct GkSolveSummary *summary);

/**
 * Runs the scenario described by `config` (the text of a scenario file)
 * and writes `report.csv` and `report.json` into `out_dir`. Returns
 * `GK_STATUS_INCOMPLETE` when a stage failed; the reports are still written.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum GkStatus gk_run_config(const char *config, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAUGEKIT_H */

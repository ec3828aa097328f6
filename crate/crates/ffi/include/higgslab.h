#ifndef HIGGSLAB_H
#define HIGGSLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_CONFIG = 3,
  HL_STATUS_NO_CONVERGENCE = 4,
  HL_STATUS_NUMERICAL = 5,
  HL_STATUS_IO = 6,
  HL_STATUS_PANIC = 7,
} HlStatus;

typedef struct HlBundle HlBundle;

typedef struct HlManifold HlManifold;

typedef struct HlMetric HlMetric;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next failing call.
 */
const char *hl_last_error(void);

/**
 * Static version string.
 */
const char *hl_version(void);

/**
 * Flat torus of complex dimension `dim` with `nperiods` periods (one per real axis, or one for all).
 *
 * # Safety
 * `periods` must point to `nperiods` doubles; `out` must be writable.
 */
enum HlStatus hl_manifold_flat_torus(size_t dim,
                                     const double *periods,
                                     size_t nperiods,
                                     size_t nodes_per_side,
                                     struct HlManifold **out);

/**
 * Truncated cusp `τ ∈ [1, tau_max]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum HlStatus hl_manifold_cusp(double tau_max,
                               size_t radial_nodes,
                               size_t angular_nodes,
                               struct HlManifold **out);

/**
 * Manifold from a JSON model block, e.g. `{"kind":"cusp_cylinder",...}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum HlStatus hl_manifold_from_json(const char *json, struct HlManifold **out);

/**
 * # Safety
 * `m` must be NULL or a handle from this library that is not used afterwards.
 */
void hl_manifold_free(struct HlManifold *m);

/**
 * Node count, or 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t hl_manifold_len(const struct HlManifold *m);

/**
 * Quadrature volume, or NaN for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
double hl_manifold_volume(const struct HlManifold *m);

/**
 * Writes the real coordinates of every node into `out`, one per real axis, node-major.
 *
 * # Safety
 * `m` must be a live handle; `out` must hold `cap` doubles.
 */
enum HlStatus hl_manifold_coords(const struct HlManifold *m, double *out, size_t cap);

/**
 * Bundle from a JSON preset block, e.g. `{"preset":"split_pair","c":0.5}`.
 *
 * # Safety
 * `m` must be a live handle, `json` NUL-terminated, `out` writable.
 */
enum HlStatus hl_bundle_from_json(const struct HlManifold *m,
                                  const char *json,
                                  struct HlBundle **out);

/**
 * # Safety
 * `b` must be NULL or a handle from this library that is not used afterwards.
 */
void hl_bundle_free(struct HlBundle *b);

/**
 * Rank, or 0 for NULL.
 *
 * # Safety
 * `b` must be NULL or a live handle.
 */
size_t hl_bundle_rank(const struct HlBundle *b);

/**
 * # Safety
 * `m` must be NULL or a handle from this library that is not used afterwards.
 */
void hl_metric_free(struct HlMetric *m);

/**
 * Writes the metric as interleaved (re, im) pairs, node-major then row-major: `2·len·r²` doubles.
 *
 * # Safety
 * `h` must be a live handle; `out` must hold `cap` doubles.
 */
enum HlStatus hl_metric_entries(const struct HlMetric *h,
                                double *out,
                                size_t cap);

/**
 * Solves `(Δ̃ − ε)f = ψ` on the closed model; `psi` and `f` hold one value per node.
 *
 * # Safety
 * `m` must be a live handle; `psi` and `f` must hold `n` doubles.
 */
enum HlStatus hl_solve_helmholtz(const struct HlManifold *m,
                                 const double *psi,
                                 size_t n,
                                 double epsilon,
                                 double *f);

/**
 * Perturbed Hermitian–Einstein metric at `epsilon > 0` against the trace-normalized identity.
 * `sup_log_h` and `residual` may be NULL.
 *
 * # Safety
 * `m` and `b` must be live handles built together; `out` must be writable.
 */
enum HlStatus hl_solve_perturbed(const struct HlManifold *m,
                                 const struct HlBundle *b,
                                 double epsilon,
                                 struct HlMetric **out,
                                 double *sup_log_h,
                                 double *residual);

/**
 * Runs a full experiment config (the CLI's JSON) into `out_dir`; `out_dir` may be NULL
 * to use the config's `output_dir`. `exit_code` (may be NULL) receives the CLI exit code.
 *
 * # Safety
 * `config_json` and `out_dir` must be NUL-terminated strings or NULL where allowed.
 */
enum HlStatus hl_run_experiment(const char *config_json, const char *out_dir, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIGGSLAB_H */

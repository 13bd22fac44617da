#ifndef KAHLER_DIRICHLET_H
#define KAHLER_DIRICHLET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum KdStatus {
  KD_STATUS_OK = 0,
  KD_STATUS_NULL_POINTER = 1,
  KD_STATUS_INVALID_ARGUMENT = 2,
  KD_STATUS_INVALID_SPEC = 3,
  KD_STATUS_POSITIVITY_VIOLATION = 4,
  KD_STATUS_MEAN_NOT_ZERO = 5,
  KD_STATUS_NO_CONVERGENCE = 6,
  KD_STATUS_DEGENERATE_PLANE = 7,
  KD_STATUS_GRID_MISMATCH = 8,
  KD_STATUS_NON_FINITE = 9,
  KD_STATUS_ANCHOR_MISMATCH = 10,
  KD_STATUS_IO = 11,
  KD_STATUS_PANIC = 12,
} KdStatus;

/**
 * Metric selector, passed as `uint32_t` to the pairing and curvature calls.
 */
typedef enum KdMetric {
  KD_METRIC_MABUCHI = 0,
  KD_METRIC_CALABI = 1,
  KD_METRIC_DIRICHLET = 2,
} KdMetric;

/**
 * Real field sampled on a torus grid.
 */
typedef struct KdField KdField;

/**
 * Admissible Kähler potential with its cached metric data.
 */
typedef struct KdPotential KdPotential;

/**
 * Periodic grid on the flat torus of complex dimension 1 or 2.
 */
typedef struct KdTorus KdTorus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t kd_last_error_message(char *buf, size_t len);

/**
 * Create a torus with complex dimension `n` and `grid` nodes per real axis.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum KdStatus kd_torus_new(size_t n, size_t grid, struct KdTorus **out);

/**
 * # Safety
 * `torus` must be null or a handle from [`kd_torus_new`] not yet freed.
 */
void kd_torus_free(struct KdTorus *torus);

/**
 * Number of grid nodes, or 0 for a null handle.
 *
 * # Safety
 * `torus` must be null or a live handle.
 */
size_t kd_torus_len(const struct KdTorus *torus);

/**
 * Copy `len` row-major values into a new field on `torus`.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` must be writable.
 */
enum KdStatus kd_field_from_values(const struct KdTorus *torus,
                                   const double *values,
                                   size_t len,
                                   struct KdField **out);

/**
 * Seeded band-limited field whose flat complex Hessian has sup-norm `amplitude`.
 *
 * # Safety
 * `torus` must be a live handle; `out` must be writable.
 */
enum KdStatus kd_field_random(const struct KdTorus *torus,
                              uint64_t seed,
                              double amplitude,
                              struct KdField **out);

/**
 * Number of values in a field, or 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t kd_field_len(const struct KdField *field);

/**
 * Copy the field values into `buf`, which must hold exactly `len` doubles.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum KdStatus kd_field_copy_values(const struct KdField *field, double *buf, size_t len);

/**
 * # Safety
 * `field` must be null or a live handle.
 */
void kd_field_free(struct KdField *field);

/**
 * Build the potential `phi` (dealiased and recentred); fails with
 * `PositivityViolation` when `g + i∂∂̄φ` is not positive definite.
 *
 * # Safety
 * `torus` and `phi` must be live handles; `out` must be writable.
 */
enum KdStatus kd_potential_new(const struct KdTorus *torus,
                               const struct KdField *phi,
                               struct KdPotential **out);

/**
 * # Safety
 * `potential` must be null or a live handle.
 */
void kd_potential_free(struct KdPotential *potential);

/**
 * Smallest eigenvalue of the metric minus the admissibility threshold.
 *
 * # Safety
 * `potential` must be a live handle; `out` must be writable.
 */
enum KdStatus kd_potential_margin(const struct KdPotential *potential, double *out);

/**
 * Copy of the stored (dealiased, mean-zero) potential function.
 *
 * # Safety
 * `potential` must be a live handle; `out` must be writable.
 */
enum KdStatus kd_potential_phi(const struct KdPotential *potential, struct KdField **out);

/**
 * `field − ∫ field e^u`, the tangent representative at `potential`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum KdStatus kd_project_tangent(const struct KdPotential *potential,
                                 const struct KdField *field,
                                 struct KdField **out);

/**
 * Pairing `⟨a, b⟩` of two tangent vectors under `metric`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum KdStatus kd_inner(uint32_t metric,
                       const struct KdPotential *potential,
                       const struct KdField *a,
                       const struct KdField *b,
                       double *out);

/**
 * Sectional curvature of the plane spanned by `a` and `b`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum KdStatus kd_sectional(uint32_t metric,
                           const struct KdPotential *potential,
                           const struct KdField *a,
                           const struct KdField *b,
                           double *out);

/**
 * Explicit bound on `|K_D(a, χ)|` over all Dirichlet-unit `χ ⟂ a`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum KdStatus kd_dirichlet_bound(const struct KdPotential *potential,
                                 const struct KdField *a,
                                 double *out);

/**
 * `w` with `Δ_φ w = v` and `∫ w e^u = 0`; `v` must have `∫ v e^u = 0`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum KdStatus kd_green_solve(const struct KdPotential *potential,
                             const struct KdField *v,
                             struct KdField **out);

/**
 * Integrate the Dirichlet geodesic from `(potential, velocity)` to time `t_final`
 * with step `dt`; writes the terminal potential and velocity.
 *
 * # Safety
 * Handles must be live; both out pointers must be writable.
 */
enum KdStatus kd_geodesic(const struct KdPotential *potential,
                          const struct KdField *velocity,
                          double t_final,
                          double dt,
                          struct KdField **out_phi,
                          struct KdField **out_velocity);

/**
 * K-energy relative to the flat potential.
 *
 * # Safety
 * `potential` must be live; `out` must be writable.
 */
enum KdStatus kd_kenergy(const struct KdPotential *potential, double *out);

/**
 * Dirichlet gradient of the K-energy.
 *
 * # Safety
 * `potential` must be live; `out` must be writable.
 */
enum KdStatus kd_kenergy_gradient(const struct KdPotential *potential, struct KdField **out);

/**
 * Run the pseudo-Calabi flow to `t_final` and write the final K-energy.
 *
 * # Safety
 * `potential` must be live; `out` must be writable.
 */
enum KdStatus kd_flow(const struct KdPotential *potential, double t_final, double dt, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KAHLER_DIRICHLET_H */

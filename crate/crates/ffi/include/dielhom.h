#ifndef DIELHOM_H
#define DIELHOM_H

#pragma once

/* generated by cbindgen at build time; do not edit */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DhStatus {
  DH_STATUS_OK = 0,
  DH_STATUS_NULL_POINTER = 1,
  DH_STATUS_INVALID_INPUT = 2,
  DH_STATUS_DOMAIN = 3,
  DH_STATUS_INFEASIBLE = 4,
  DH_STATUS_EMPTY_CLUSTER = 5,
  DH_STATUS_DEGENERATE = 6,
  DH_STATUS_OUT_OF_BRANCH = 7,
  DH_STATUS_SOLVER_FAILURE = 8,
  DH_STATUS_LSE_FAILURE = 9,
  DH_STATUS_CONFIG = 10,
  DH_STATUS_IO = 11,
  DH_STATUS_BUFFER_TOO_SMALL = 12,
  DH_STATUS_PANIC = 13,
} DhStatus;

typedef enum DhSign {
  DH_SIGN_UPPER = 0,
  DH_SIGN_LOWER = 1,
} DhSign;

typedef enum DhRegime {
  DH_REGIME_DIELECTRIC_POSITIVE = 0,
  DH_REGIME_PLASMONIC_NEGATIVE = 1,
  DH_REGIME_DEGENERATE = 2,
} DhRegime;

/**
 * Opaque particle cluster.
 */
typedef struct DhCluster DhCluster;

/**
 * Opaque Foldy–Lax solution; keeps its cluster and scales for far fields.
 */
typedef struct DhSolution DhSolution;

/**
 * Derived scale set; plain data, owned by the caller.
 */
typedef struct DhScales {
  double a;
  double h;
  double eta0;
  double eta;
  double c0;
  enum DhSign sign;
  double c_r;
  double lambda_n0_b;
  double d;
  double k;
} DhScales;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *dh_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next dh_* call on the same thread.
 */
const char *dh_last_error_message(void);

/**
 * Derives k, η and d from the raw parameters.
 *
 * # Safety
 * `out` must point to writable storage for one `DhScales`.
 */
enum DhStatus dh_derive_scales(double a,
                               double h,
                               double eta0,
                               double c0,
                               enum DhSign sign,
                               double c_r,
                               double lambda_n0_b,
                               struct DhScales *out);

/**
 * Cubic lattice of pitch `d` inside an axis-aligned box.
 *
 * # Safety
 * `center` and `extents` point to three doubles; `out` is writable.
 */
enum DhStatus dh_cluster_new_box(const double *center,
                                 const double *extents,
                                 double d,
                                 struct DhCluster **out);

/**
 * Cubic lattice of pitch `d` inside a ball.
 *
 * # Safety
 * `center` points to three doubles; `out` is writable.
 */
enum DhStatus dh_cluster_new_ball(const double *center,
                                  double radius,
                                  double d,
                                  struct DhCluster **out);

/**
 * Number of particles; 0 for NULL.
 *
 * # Safety
 * `c` is NULL or a live cluster handle.
 */
size_t dh_cluster_len(const struct DhCluster *c);

/**
 * Copies the centres (x, y, z per particle) into `out`, which holds `cap`
 * doubles.
 *
 * # Safety
 * `c` is a live cluster handle and `out` has room for `cap` doubles.
 */
enum DhStatus dh_cluster_centers(const struct DhCluster *c, double *out, size_t cap);

/**
 * # Safety
 * `c` is NULL or a handle not yet freed.
 */
void dh_cluster_free(struct DhCluster *c);

/**
 * Solves the Foldy–Lax system (Q-form, ball polarisation tensor) for the
 * plane wave with direction `theta` and polarisation `p` at the scale-set
 * wavenumber.
 *
 * # Safety
 * `cluster` is live, `scales` points to one `DhScales`, `theta` and `p` to
 * three doubles each, `out` is writable.
 */
enum DhStatus dh_foldylax_solve(const struct DhCluster *cluster,
                                const struct DhScales *scales,
                                const double *theta,
                                const double *p,
                                struct DhSolution **out);

/**
 * Number of particles in the solution; 0 for NULL.
 *
 * # Safety
 * `s` is NULL or a live solution handle.
 */
size_t dh_solution_len(const struct DhSolution *s);

/**
 * Relative residual of the solve; NaN for NULL.
 *
 * # Safety
 * `s` is NULL or a live solution handle.
 */
double dh_solution_residual(const struct DhSolution *s);

/**
 * Invertibility margin of the system (below one: Neumann-convergent).
 *
 * # Safety
 * `s` is NULL or a live solution handle.
 */
double dh_solution_margin(const struct DhSolution *s);

/**
 * Copies the Q vectors, 6 doubles per particle.
 *
 * # Safety
 * `s` is live and `out` has room for `cap` doubles.
 */
enum DhStatus dh_solution_vectors(const struct DhSolution *s, double *out, size_t cap);

/**
 * Far-field pattern at `n` unit directions (3 doubles each); writes 6
 * doubles per direction.
 *
 * # Safety
 * `s` is live, `dirs` holds `3n` doubles and `out` has room for `cap`.
 */
enum DhStatus dh_solution_far_field(const struct DhSolution *s,
                                    const double *dirs,
                                    size_t n,
                                    double *out,
                                    size_t cap);

/**
 * # Safety
 * `s` is NULL or a handle not yet freed.
 */
void dh_solution_free(struct DhSolution *s);

/**
 * Scalar effective permeability of the ball cluster.
 */
double dh_ball_mu(double xi, enum DhSign sign);

/**
 * Sign regime of the ball permeability.
 */
enum DhRegime dh_classify_regime(double xi, enum DhSign sign);

/**
 * Effective permeability tensor (ball polarisation), row-major, 18 doubles
 * (re, im per entry).
 *
 * # Safety
 * `out` has room for 18 doubles.
 */
enum DhStatus dh_effective_mu(double xi, enum DhSign sign, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIELHOM_H */

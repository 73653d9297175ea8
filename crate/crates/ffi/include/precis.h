#ifndef PRECIS_H
#define PRECIS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrecisStatus {
  PRECIS_STATUS_OK = 0,
  PRECIS_STATUS_INVALID_INPUT = 1,
  PRECIS_STATUS_DIMENSION_MISMATCH = 2,
  PRECIS_STATUS_NOT_POSITIVE_DEFINITE = 3,
  /**
   * EM hit its cap; the returned estimate is the last iterate.
   */
  PRECIS_STATUS_NON_CONVERGENCE = 4,
  PRECIS_STATUS_NUMERICAL_FAILURE = 5,
  PRECIS_STATUS_NULL_POINTER = 6,
  PRECIS_STATUS_PANIC = 7,
} PrecisStatus;

/**
 * A fitted precision matrix with its inclusion probabilities.
 */
typedef struct PrecisEstimate PrecisEstimate;

/**
 * Symmetric `d x d` matrix.
 */
typedef struct PrecisMatrix PrecisMatrix;

/**
 * Spike-and-slab settings; see [`precis_hyperparams_default`].
 */
typedef struct PrecisHyperparams {
  double v0;
  double v1;
  double eta;
  double tau;
  double bound;
  double em_tol;
  size_t em_max_iter;
  size_t max_sweeps;
} PrecisHyperparams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *precis_last_error(void);

/**
 * `η = 0.5`, `τ = v0`, bound 10, tolerance 1e-4, 50 EM iterations, 200 sweeps.
 */
struct PrecisHyperparams precis_hyperparams_default(double v0, double v1);

/**
 * Copies a row-major `dim x dim` array into a new matrix handle.
 *
 * # Safety
 * `data` must point to `dim * dim` doubles; `out` must be writable.
 */
enum PrecisStatus precis_matrix_new(size_t dim, const double *data, struct PrecisMatrix **out);

/**
 * Dimension of `m`, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t precis_matrix_dim(const struct PrecisMatrix *m);

/**
 * Copies the entries of `m` row-major into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `m` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum PrecisStatus precis_matrix_copy(const struct PrecisMatrix *m, double *buf, size_t len);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void precis_matrix_free(struct PrecisMatrix *m);

/**
 * Precision of the contaminated variable given `omega_x` and diagonal error
 * variances `sigma_u` (length `dim`).
 *
 * # Safety
 * `omega_x` must be a live handle, `sigma_u` must point to `dim` doubles and
 * `out` must be writable.
 */
enum PrecisStatus precis_contaminated_precision(const struct PrecisMatrix *omega_x,
                                                const double *sigma_u,
                                                struct PrecisMatrix **out);

/**
 * Fits the spike-and-slab model to a sample covariance `s` from `n`
 * observations. `init` may be null to start from the default.
 *
 * On [`PrecisStatus::NonConvergence`] `*out` still receives the last iterate.
 *
 * # Safety
 * `s` must be a live handle, `init` null or a live handle, `hp` readable
 * and `out` writable.
 */
enum PrecisStatus precis_fit_bagus(const struct PrecisMatrix *s,
                                   size_t n,
                                   const struct PrecisHyperparams *hp,
                                   const struct PrecisMatrix *init,
                                   struct PrecisEstimate **out);

/**
 * Sample covariance (divisor `n`) of a row-major `n x d` data array.
 *
 * # Safety
 * `data` must point to `n * d` doubles and `out` must be writable.
 */
enum PrecisStatus precis_sample_covariance(const double *data,
                                           size_t n,
                                           size_t d,
                                           struct PrecisMatrix **out);

/**
 * Runs the measurement-error correction on row-major `n x d` observations
 * `w` with error variances `sigma_u` (length `d`) and returns the averaged
 * estimate. Iterations whose EM hit its cap are kept, as in the library.
 *
 * # Safety
 * `w` must point to `n * d` doubles, `sigma_u` to `d` doubles, `hp` must be
 * readable and `out` writable.
 */
enum PrecisStatus precis_run_iro(const double *w,
                                 size_t n,
                                 size_t d,
                                 const double *sigma_u,
                                 const struct PrecisHyperparams *hp,
                                 size_t iterations,
                                 double burn_in_fraction,
                                 uint64_t seed,
                                 struct PrecisEstimate **out);

/**
 * New handle holding the estimated precision matrix, or null.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
struct PrecisMatrix *precis_estimate_omega(const struct PrecisEstimate *e);

/**
 * New handle holding the slab inclusion probabilities, or null.
 *
 * # Safety
 * `e` must be null or a live handle.
 */
struct PrecisMatrix *precis_estimate_inclusion(const struct PrecisEstimate *e);

/**
 * EM iterations used (for an averaged estimate, the number of iterates averaged).
 *
 * # Safety
 * `e` must be null or a live handle.
 */
size_t precis_estimate_iterations(const struct PrecisEstimate *e);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
bool precis_estimate_converged(const struct PrecisEstimate *e);

/**
 * # Safety
 * `e` must be null or a handle not yet freed.
 */
void precis_estimate_free(struct PrecisEstimate *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRECIS_H */

/* C interface for the covshift library. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_ARGUMENT = 1,
  CS_STATUS_INVALID_ARGUMENT = 2,
  CS_STATUS_IO_ERROR = 3,
  CS_STATUS_PARSE_ERROR = 4,
  CS_STATUS_TRAINING_DIVERGED = 5,
  CS_STATUS_OUT_OF_DOMAIN = 6,
  CS_STATUS_INTERNAL_ERROR = 7,
} CsStatus;

/**
 * Opaque simplicial approximant.
 */
typedef struct CsApproximant CsApproximant;

/**
 * Opaque repeated-measurements dataset.
 */
typedef struct CsDataset CsDataset;

/**
 * Opaque density-ratio model.
 */
typedef struct CsRatioModel CsRatioModel;

/**
 * Opaque fitted regression estimator.
 */
typedef struct CsRegressionModel CsRegressionModel;

/**
 * Scalar target function supplied by the caller: receives `d` coordinates
 * and the user pointer, returns the function value.
 */
typedef double (*CsScalarFn)(const double *x, uintptr_t d, void *user);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Message of the last failure on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *cs_last_error(void);

/**
 * Reads a dataset CSV (`subject_id, obs_id, x_1..x_d[, y]`).
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum CsStatus cs_dataset_read_csv(const char *path, struct CsDataset **out);

/**
 * Writes a dataset CSV.
 *
 * # Safety
 * `ds` must be a live dataset handle; `path` a NUL-terminated string.
 */
enum CsStatus cs_dataset_write_csv(const struct CsDataset *ds, const char *path);

/**
 * Draws a simulated dataset. `case`: 1 or 2; `regime`: 0 bounded,
 * 1 unbounded; `domain`: 0 source, 1 target; `with_responses` attaches
 * responses (source-law data only needs them).
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum CsStatus cs_dataset_simulate(uint32_t case_,
                                  uint32_t regime,
                                  uint32_t domain,
                                  uintptr_t n_subjects,
                                  uintptr_t m_per_subject,
                                  uint64_t seed,
                                  bool with_responses,
                                  struct CsDataset **out);

/**
 * Covariate dimension; 0 for a null handle.
 *
 * # Safety
 * `ds` must be a live dataset handle or NULL.
 */
uintptr_t cs_dataset_dim(const struct CsDataset *ds);

/**
 * Number of subjects; 0 for a null handle.
 *
 * # Safety
 * `ds` must be a live dataset handle or NULL.
 */
uintptr_t cs_dataset_subjects(const struct CsDataset *ds);

/**
 * Total observation count; 0 for a null handle.
 *
 * # Safety
 * `ds` must be a live dataset handle or NULL.
 */
uintptr_t cs_dataset_observations(const struct CsDataset *ds);

/**
 * # Safety
 * `ds` must come from this library and not be freed twice.
 */
void cs_dataset_free(struct CsDataset *ds);

/**
 * Exact Gaussian-copula ratio. `clip <= 0` means no truncation.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
enum CsStatus cs_ratio_exact_copula(double mu_p,
                                    double var_p,
                                    double mu_q,
                                    double var_q,
                                    uintptr_t d,
                                    double clip,
                                    struct CsRatioModel **out);

/**
 * Fits the ratio from source and target covariates by minimizing the
 * empirical ratio risk. `clip <= 0` trains unclipped; a positive `clip`
 * trains inside the truncated class at that level.
 *
 * # Safety
 * `source` and `target` must be live dataset handles; `out` writable.
 */
enum CsStatus cs_ratio_fit(const struct CsDataset *source,
                           const struct CsDataset *target,
                           uint64_t seed,
                           double clip,
                           struct CsRatioModel **out);

/**
 * Evaluates the ratio at a point of dimension `len`.
 *
 * # Safety
 * `model` must be live; `x` must point to `len` doubles; `out` writable.
 */
enum CsStatus cs_ratio_evaluate(const struct CsRatioModel *model,
                                const double *x,
                                uintptr_t len,
                                double *out);

/**
 * # Safety
 * `model` must be live; `path` a NUL-terminated string.
 */
enum CsStatus cs_ratio_save(const struct CsRatioModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum CsStatus cs_ratio_load(const char *path, struct CsRatioModel **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void cs_ratio_free(struct CsRatioModel *model);

/**
 * Naive estimator: unweighted fit on all source observations.
 *
 * # Safety
 * `source` must be a live dataset handle with responses; `out` writable.
 */
enum CsStatus cs_fit_naive(const struct CsDataset *source,
                           uint64_t seed,
                           struct CsRegressionModel **out);

/**
 * Known-ratio estimator: ratio-weighted fit on the full source dataset.
 *
 * # Safety
 * `source` and `ratio` must be live handles; `out` writable.
 */
enum CsStatus cs_fit_kre(const struct CsDataset *source,
                         const struct CsRatioModel *ratio,
                         uint64_t seed,
                         struct CsRegressionModel **out);

/**
 * Unknown-ratio estimator: splits the source subjects, fits the ratio on
 * one half against the target covariates, then the weighted regression on
 * the other half. `ratio_clip <= 0` trains the ratio unclipped.
 *
 * # Safety
 * `source` and `target` must be live handles; `out` writable.
 */
enum CsStatus cs_fit_ure(const struct CsDataset *source,
                         const struct CsDataset *target,
                         uint64_t seed,
                         double ratio_clip,
                         struct CsRegressionModel **out);

/**
 * Deterministic forward pass of the fitted network.
 *
 * # Safety
 * `model` must be live; `x` must point to `len` doubles; `out` writable.
 */
enum CsStatus cs_regression_predict(const struct CsRegressionModel *model,
                                    const double *x,
                                    uintptr_t len,
                                    double *out);

/**
 * Estimator kind: 0 naive, 1 known-ratio, 2 unknown-ratio;
 * `usize::MAX` for a null handle.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
uintptr_t cs_regression_kind(const struct CsRegressionModel *model);

/**
 * Persists the network plus its metadata sidecar.
 *
 * # Safety
 * `model` must be live; `path` a NUL-terminated string.
 */
enum CsStatus cs_regression_save(const struct CsRegressionModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` writable.
 */
enum CsStatus cs_regression_load(const char *path, struct CsRegressionModel **out);

/**
 * # Safety
 * `model` must come from this library and not be freed twice.
 */
void cs_regression_free(struct CsRegressionModel *model);

/**
 * Builds the simplicial partition-of-unity approximant of a callback
 * function on `[0,1]^d` at mesh resolution `n`, for the Hölder ball with
 * smoothness `zeta` and constant `b`. Derivatives are taken by central
 * finite differences, so `f` must be evaluable slightly outside the cube.
 *
 * # Safety
 * `f` must be callable with the documented signature for the duration of
 * this call; `out` must be writable.
 */
enum CsStatus cs_approximant_build(CsScalarFn f,
                                   void *user,
                                   uintptr_t d,
                                   uintptr_t n,
                                   double zeta,
                                   double b,
                                   struct CsApproximant **out);

/**
 * Evaluates the approximant at a point of dimension `len`.
 *
 * # Safety
 * `approx` must be live; `x` must point to `len` doubles; `out` writable.
 */
enum CsStatus cs_approximant_evaluate(const struct CsApproximant *approx,
                                      const double *x,
                                      uintptr_t len,
                                      double *out);

/**
 * The certified sup-error bound `(d+1) B d^t N^(-zeta)`; NaN for invalid
 * smoothness parameters.
 */
double cs_error_certificate(uintptr_t d, double zeta, double b, uintptr_t n);

/**
 * # Safety
 * `approx` must come from this library and not be freed twice.
 */
void cs_approximant_free(struct CsApproximant *approx);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

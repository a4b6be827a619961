#ifndef EXPLASSO_H
#define EXPLASSO_H

/* Generated by cbindgen from the explasso-ffi crate. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ExplassoStatus {
  EXPLASSO_STATUS_OK = 0,
  EXPLASSO_STATUS_NULL_POINTER = 1,
  EXPLASSO_STATUS_INVALID_ARGUMENT = 2,
  EXPLASSO_STATUS_PARSE = 3,
  EXPLASSO_STATUS_IO = 4,
  EXPLASSO_STATUS_NUMERIC = 5,
  EXPLASSO_STATUS_RANK = 6,
  EXPLASSO_STATUS_DIMENSION = 7,
  EXPLASSO_STATUS_PANIC = 8,
} ExplassoStatus;

// A Monte Carlo calibration of λ.
typedef struct ExplassoCalibration ExplassoCalibration;

// A response with its design.
typedef struct ExplassoDataset ExplassoDataset;

// A fitted exp-Lasso.
typedef struct ExplassoFit ExplassoFit;

// A noise model.
typedef struct ExplassoModel ExplassoModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on this thread.
const char *explasso_last_error(void);

// Parses `gaussian`, `subbotin:<r>`, `logistic`, `huber` or `gumbel`.
//
// # Safety
// `spec` must be a nul-terminated string; `out` must be writable.
enum ExplassoStatus explasso_model_new(const char *spec, struct ExplassoModel **out);

// # Safety
// `model` must come from `explasso_model_new` and not be used afterwards.
void explasso_model_free(struct ExplassoModel *model);

// Fisher information at (0, 1) as a row-major 2×2 matrix ordered
// (scale, location), plus its inverse.
//
// # Safety
// `info` and `inverse` must each point to 4 writable doubles.
enum ExplassoStatus explasso_fisher_info(const struct ExplassoModel *model,
                                         double *info,
                                         double *inverse);

// Builds a dataset from `y` (length `n`) and a row-major `n × p` design.
// `penalized` may be null (every column penalized) or hold `p` flags.
// With `intercept` nonzero an unpenalized intercept is prepended and the
// penalized columns are centered.
//
// # Safety
// The arrays must hold the stated number of elements.
enum ExplassoStatus explasso_dataset_new(const double *y,
                                         const double *x,
                                         uintptr_t n,
                                         uintptr_t p,
                                         const uint8_t *penalized,
                                         int32_t intercept,
                                         struct ExplassoDataset **out);

// Reads a CSV file with a `y` column; every other column is a predictor.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum ExplassoStatus explasso_dataset_from_csv(const char *path,
                                              int32_t intercept,
                                              struct ExplassoDataset **out);

// Number of observations, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
uintptr_t explasso_dataset_n(const struct ExplassoDataset *ds);

// Number of columns including any intercept, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
uintptr_t explasso_dataset_p(const struct ExplassoDataset *ds);

// # Safety
// `ds` must come from a dataset constructor and not be used afterwards.
void explasso_dataset_free(struct ExplassoDataset *ds);

// Calibrates λ on the dataset's design by `n_reps` Monte Carlo draws.
//
// # Safety
// Handles must be live; `out` must be writable.
enum ExplassoStatus explasso_calibrate(const struct ExplassoDataset *ds,
                                       const struct ExplassoModel *model,
                                       double alpha,
                                       double eta,
                                       uintptr_t n_reps,
                                       uint64_t seed,
                                       struct ExplassoCalibration **out);

// Calibrated λ = quantile/(1 − η), or NaN for a null handle.
//
// # Safety
// `cal` must be null or a live calibration handle.
double explasso_calibration_lambda(const struct ExplassoCalibration *cal);

// Empirical (1 − α)-quantile of λ*, or NaN for a null handle.
//
// # Safety
// `cal` must be null or a live calibration handle.
double explasso_calibration_quantile(const struct ExplassoCalibration *cal);

// Monte Carlo bracket of the quantile.
//
// # Safety
// `lo` and `hi` must be writable.
enum ExplassoStatus explasso_calibration_bracket(const struct ExplassoCalibration *cal,
                                                 double *lo,
                                                 double *hi);

// Number of λ* samples, or 0 for a null handle.
//
// # Safety
// `cal` must be null or a live calibration handle.
uintptr_t explasso_calibration_len(const struct ExplassoCalibration *cal);

// Copies the sorted λ* samples into `out` (at least `len` entries).
//
// # Safety
// `out` must hold `len` writable doubles.
enum ExplassoStatus explasso_calibration_samples(const struct ExplassoCalibration *cal,
                                                 double *out,
                                                 uintptr_t len);

// # Safety
// `cal` must come from `explasso_calibrate` and not be used afterwards.
void explasso_calibration_free(struct ExplassoCalibration *cal);

// Fits the exp-Lasso at penalty `lambda`. `tol_kkt ≤ 0` selects the
// default tolerance; `n_starts` random restarts are seeded by `seed`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum ExplassoStatus explasso_fit(const struct ExplassoDataset *ds,
                                 const struct ExplassoModel *model,
                                 double lambda,
                                 double tol_kkt,
                                 uintptr_t n_starts,
                                 uint64_t seed,
                                 struct ExplassoFit **out);

// Number of coefficients, or 0 for a null handle.
//
// # Safety
// `fit` must be null or a live fit handle.
uintptr_t explasso_fit_len(const struct ExplassoFit *fit);

// Copies β̂ into `out` (at least `len` entries).
//
// # Safety
// `out` must hold `len` writable doubles.
enum ExplassoStatus explasso_fit_beta(const struct ExplassoFit *fit, double *out, uintptr_t len);

// σ̂, or NaN for a null handle.
//
// # Safety
// `fit` must be null or a live fit handle.
double explasso_fit_sigma(const struct ExplassoFit *fit);

// Objective value at the solution, or NaN for a null handle.
//
// # Safety
// `fit` must be null or a live fit handle.
double explasso_fit_objective(const struct ExplassoFit *fit);

// KKT residual at the solution, or NaN for a null handle.
//
// # Safety
// `fit` must be null or a live fit handle.
double explasso_fit_kkt_residual(const struct ExplassoFit *fit);

// 1 if the solver met its tolerances, 0 otherwise (or for a null handle).
//
// # Safety
// `fit` must be null or a live fit handle.
int32_t explasso_fit_converged(const struct ExplassoFit *fit);

// # Safety
// `fit` must come from `explasso_fit` and not be used afterwards.
void explasso_fit_free(struct ExplassoFit *fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPLASSO_H */

#ifndef ATTVAR_H
#define ATTVAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum AttvarStatus {
  ATTVAR_STATUS_OK = 0,
  // A required pointer argument was NULL.
  ATTVAR_STATUS_NULL_POINTER = 1,
  // An argument is out of range (unknown estimand code, bad level, ...).
  ATTVAR_STATUS_INVALID_ARGUMENT = 2,
  // The data violate an input invariant.
  ATTVAR_STATUS_VALIDATION = 3,
  // A numerical routine failed (e.g. logistic fit did not converge).
  ATTVAR_STATUS_NUMERIC = 4,
  // Text input (JSON) could not be parsed.
  ATTVAR_STATUS_PARSE = 5,
  // Internal panic caught at the boundary.
  ATTVAR_STATUS_PANIC = 6,
} AttvarStatus;

// Estimand codes accepted by the report accessors.
typedef enum AttvarEstimandCode {
  ATTVAR_ESTIMAND_CODE_PATT = 0,
  ATTVAR_ESTIMAND_CODE_ACTT = 1,
  ATTVAR_ESTIMAND_CODE_SWATT = 2,
  ATTVAR_ESTIMAND_CODE_CATT = 3,
  ATTVAR_ESTIMAND_CODE_SATT = 4,
  ATTVAR_ESTIMAND_CODE_MATT = 5,
} AttvarEstimandCode;

// Opaque validated dataset.
typedef struct AttvarDataset AttvarDataset;

// Opaque estimation report.
typedef struct AttvarReport AttvarReport;

// Estimation settings; obtain defaults from `attvar_estimate_options_default`.
typedef struct AttvarEstimateOptions {
  double ci_level;
  // Cross-fitting folds; 1 disables cross-fitting.
  uint32_t folds;
  double clip_eps;
  // Fold-assignment seed.
  uint64_t seed;
  // Bit `k` requests the estimand with code `k`; 0 means all.
  uint32_t estimand_mask;
} AttvarEstimateOptions;

// Caller-supplied nuisance arrays, one value per dataset row. Any pointer may be NULL,
// in which case that nuisance is fitted.
typedef struct AttvarOracle {
  const double *pi;
  const double *mu0;
  const double *mu1;
  const double *sigma0;
  const double *sigma1;
} AttvarOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or "" after a
// success. The pointer stays valid until the next call on this thread.
const char *attvar_last_error_message(void);

// Builds a dataset from `n` outcomes, `n` treatment indicators (0 or 1)
// and an `n x d` row-major covariate matrix (may be NULL when `d == 0`).
//
// # Safety
// Pointers must be valid for the stated number of reads; `out` must be writable.
enum AttvarStatus attvar_dataset_new(const double *y,
                                     const double *a,
                                     const double *x_row_major,
                                     size_t n,
                                     size_t d,
                                     bool binary_outcome,
                                     struct AttvarDataset **out);

// # Safety
// `ds` must be NULL or a handle from `attvar_dataset_new` not yet freed.
void attvar_dataset_free(struct AttvarDataset *ds);

// # Safety
// `ds` must be a live dataset handle.
size_t attvar_dataset_rows(const struct AttvarDataset *ds);

struct AttvarEstimateOptions attvar_estimate_options_default(void);

// Runs the full estimation. `options` and `oracle` may be NULL.
//
// # Safety
// `ds` must be a live handle; non-NULL oracle arrays must hold as many
// values as the dataset has rows; `out` must be writable.
enum AttvarStatus attvar_estimate(const struct AttvarDataset *ds,
                                  const struct AttvarEstimateOptions *options,
                                  const struct AttvarOracle *oracle,
                                  struct AttvarReport **out);

// # Safety
// `report` must be NULL or a live report handle.
void attvar_report_free(struct AttvarReport *report);

// # Safety
// `report` must be a live handle and `out` writable.
enum AttvarStatus attvar_report_psi_hat(const struct AttvarReport *report, double *out);

// Variance used for inference on the estimand `kind` (an `AttvarEstimandCode`).
//
// # Safety
// `report` must be a live handle and `out` writable.
enum AttvarStatus attvar_report_variance(const struct AttvarReport *report,
                                         uint32_t kind,
                                         double *out);

// # Safety
// `report` must be a live handle and both out-pointers writable.
enum AttvarStatus attvar_report_ci(const struct AttvarReport *report,
                                   uint32_t kind,
                                   double *lower,
                                   double *upper);

// The report as JSON; free the string with `attvar_string_free`.
//
// # Safety
// `report` must be a live handle and `out` writable.
enum AttvarStatus attvar_report_to_json(const struct AttvarReport *report, char **out);

// Runs a Monte Carlo study for a JSON data-generating spec and returns
// the report as JSON. Fitted nuisances unless `oracle_nuisances`.
//
// # Safety
// `spec_json` must be a NUL-terminated string and `out` writable.
enum AttvarStatus attvar_simulate_json(const char *spec_json,
                                       size_t n,
                                       size_t reps,
                                       uint64_t seed,
                                       bool oracle_nuisances,
                                       char **out);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void attvar_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTVAR_H */

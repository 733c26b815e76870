#ifndef QMLE_H
#define QMLE_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QmleStatus {
  QMLE_STATUS_OK = 0,
  QMLE_STATUS_NULL_POINTER = 1,
  QMLE_STATUS_DOMAIN = 2,
  QMLE_STATUS_INVALID_PARAMETER = 3,
  QMLE_STATUS_NUMERICAL = 4,
  QMLE_STATUS_SINGULAR = 5,
  QMLE_STATUS_EMPTY_DATA = 6,
  QMLE_STATUS_CONFIG = 7,
  QMLE_STATUS_INPUT = 8,
  QMLE_STATUS_IO = 9,
  QMLE_STATUS_BUFFER_TOO_SMALL = 10,
  QMLE_STATUS_PANIC = 11,
} QmleStatus;

// Cell counts grouped by quantizer bank.
typedef struct QmleDataset QmleDataset;

// Model structure: Gamma scales per sensor.
typedef struct QmleModel QmleModel;

// Summary of a fit; the estimate itself is written to a caller array.
typedef struct QmleFitSummary {
  double loglik;
  size_t iterations;
  size_t restarts_used;
  bool converged;
  bool at_boundary;
} QmleFitSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
size_t qmle_last_error_message(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *qmle_version(void);

// Creates a model with one Gamma scale per sensor.
//
// # Safety
// `scales` must point to `n_sensors` doubles; `out` must be writable.
enum QmleStatus qmle_model_new(const double *scales, size_t n_sensors, struct QmleModel **out);

// # Safety
// `model` must come from `qmle_model_new` or be null.
void qmle_model_free(struct QmleModel *model);

// Number of parameters (`1 + n_sensors`): the copula parameter followed by
// the Gamma shapes.
//
// # Safety
// `model` must be a live handle or null (returns 0).
size_t qmle_model_n_params(const struct QmleModel *model);

// Cell probabilities of one bank (one threshold per sensor), indexed with
// sensor 1 as the most significant bit. `out` needs `2^n_sensors` entries.
//
// # Safety
// Pointers must be valid for their lengths.
enum QmleStatus qmle_cell_pmf(const struct QmleModel *model,
                              const double *theta,
                              size_t theta_len,
                              const double *thresholds,
                              size_t n_thresholds,
                              double *out,
                              size_t out_len);

// Per-sample Fisher information of one bank, written row-major into `out`
// (`n_params^2` entries).
//
// # Safety
// Pointers must be valid for their lengths.
enum QmleStatus qmle_fim(const struct QmleModel *model,
                         const double *theta,
                         size_t theta_len,
                         const double *thresholds,
                         size_t n_thresholds,
                         double *out,
                         size_t out_len);

// Per-sample asymptotic covariance of the multi-bank estimator:
// `(sum_j w_j I_j)^-1` with `I_j` the information of bank `j`. Banks are
// `n_banks` consecutive threshold groups of `n_sensors` entries. A null
// `weights` means equal shares. Optionally writes the condition number.
//
// # Safety
// Pointers must be valid for their lengths; `condition` may be null.
enum QmleStatus qmle_crlb(const struct QmleModel *model,
                          const double *theta,
                          size_t theta_len,
                          const double *thresholds,
                          size_t n_banks,
                          const double *weights,
                          double *out,
                          size_t out_len,
                          double *condition);

// Combined variance `1 / sum_j w_j I_j` of scalar informations. A null
// `weights` means equal shares.
//
// # Safety
// Pointers must be valid for `n`; `out` must be writable.
enum QmleStatus qmle_combine_scalar(const double *informations,
                                    const double *weights,
                                    size_t n,
                                    double *out);

// Creates an empty data set for `n_sensors` sensors.
//
// # Safety
// `out` must be writable.
enum QmleStatus qmle_dataset_new(size_t n_sensors, struct QmleDataset **out);

// # Safety
// `dataset` must come from `qmle_dataset_new` or be null.
void qmle_dataset_free(struct QmleDataset *dataset);

// Adds the cell counts observed through one bank (`2^n_sensors` counts,
// sensor 1 as the most significant bit).
//
// # Safety
// Pointers must be valid for their lengths.
enum QmleStatus qmle_dataset_add_bank(struct QmleDataset *dataset,
                                      const double *thresholds,
                                      size_t n_thresholds,
                                      const uint64_t *counts,
                                      size_t n_counts);

// Maximum-likelihood fit of the quantized data. Writes the estimate into
// `theta_out` (`n_params` entries) and the summary into `summary`.
//
// # Safety
// Handles must be live; output pointers valid.
enum QmleStatus qmle_fit(const struct QmleModel *model,
                         const struct QmleDataset *dataset,
                         uint64_t seed,
                         double *theta_out,
                         size_t theta_len,
                         struct QmleFitSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QMLE_H */

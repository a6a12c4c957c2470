#ifndef CERTLAB_H
#define CERTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every entry point.
typedef enum CertlabStatus {
  CERTLAB_STATUS_OK = 0,
  CERTLAB_STATUS_NULL_POINTER = 1,
  CERTLAB_STATUS_INVALID_UTF8 = 2,
  CERTLAB_STATUS_CONFIG = 3,
  CERTLAB_STATUS_INVALID_ARGUMENT = 4,
  CERTLAB_STATUS_SHAPE = 5,
  CERTLAB_STATUS_NUMERICAL = 6,
  CERTLAB_STATUS_UNSUPPORTED = 7,
  CERTLAB_STATUS_IO = 8,
  CERTLAB_STATUS_BUFFER_TOO_SMALL = 9,
  CERTLAB_STATUS_PANIC = 10,
} CertlabStatus;

// Opaque handle to a validated problem description.
typedef struct CertlabProblem CertlabProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread; empty after a success.
// The pointer stays valid until the next certlab call on this thread.
const char *certlab_last_error(void);

// Library version as a static nul-terminated string.
const char *certlab_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from a certlab `char **` output and not be freed twice.
void certlab_string_free(char *s);

// `E‖ε‖₂` for `ε ~ N(0, I_n)`.
double certlab_lambda_n(size_t n);

// Parses and validates a problem configuration (JSON).
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum CertlabStatus certlab_problem_from_json(const char *json, struct CertlabProblem **out);

// Releases a problem handle. Null is ignored.
//
// # Safety
// `p` must come from [`certlab_problem_from_json`] and not be freed twice.
void certlab_problem_free(struct CertlabProblem *p);

// Parameter dimension of the problem, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live handle.
size_t certlab_problem_dim(const struct CertlabProblem *p);

// Solves the problem into `beta_out`; `len` must be at least the dimension.
//
// # Safety
// `p` must be a live handle and `beta_out` must hold `len` doubles.
enum CertlabStatus certlab_solve(const struct CertlabProblem *p, double *beta_out, size_t len);

// Full solve report as JSON (`beta`, `objective`, `kkt_residual`, `status`, ...).
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum CertlabStatus certlab_solve_json(const struct CertlabProblem *p, char **out);

// Certificate reports at the anchor as JSON.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum CertlabStatus certlab_certify_json(const struct CertlabProblem *p, char **out);

// Monte Carlo Gaussian width at the anchor frame.
//
// # Safety
// `p` must be a live handle; `mean` and `std_error` must be writable.
enum CertlabStatus certlab_width(const struct CertlabProblem *p, double *mean, double *std_error);

// GLM oracle bound report as JSON.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum CertlabStatus certlab_glm_bound_json(const struct CertlabProblem *p, char **out);

// Lasso with the quadratic loss `‖Xβ − y‖²` on a row-major `n × p` design.
//
// # Safety
// `x` must hold `n·p` doubles, `y` and `beta_out` `n` and `p` doubles.
enum CertlabStatus certlab_lasso(const double *x,
                                 size_t n,
                                 size_t p,
                                 const double *y,
                                 double lambda,
                                 double *beta_out);

// Runs an experiment configuration and returns its trial table as CSV.
//
// # Safety
// `config_json` must be a nul-terminated string; `out_csv` must be writable.
enum CertlabStatus certlab_run_experiment_csv(const char *config_json, char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CERTLAB_H */

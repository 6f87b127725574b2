#ifndef QPNLS_H
#define QPNLS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the nonzero values 1 to 4 match the CLI exit codes.
typedef enum QpnlsStatus {
  QPNLS_STATUS_OK = 0,
  QPNLS_STATUS_FAILED = 1,
  QPNLS_STATUS_EMPTY_CANTOR_SET = 2,
  QPNLS_STATUS_DIVERGENCE = 3,
  QPNLS_STATUS_CONFIG_ERROR = 4,
  QPNLS_STATUS_NULL_ARGUMENT = 5,
  QPNLS_STATUS_INVALID_UTF8 = 6,
  QPNLS_STATUS_PANIC = 7,
} QpnlsStatus;

typedef enum QpnlsSubcommand {
  QPNLS_SUBCOMMAND_SOLVE = 0,
  QPNLS_SUBCOMMAND_REDUCE = 1,
  QPNLS_SUBCOMMAND_MEASURE = 2,
  QPNLS_SUBCOMMAND_STABILITY = 3,
  QPNLS_SUBCOMMAND_VERIFY_NORMS = 4,
} QpnlsSubcommand;

// Opaque run configuration.
typedef struct QpnlsConfig QpnlsConfig;

// Opaque Cantor-set measure table.
typedef struct QpnlsMeasure QpnlsMeasure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *qpnls_version(void);

// Message of the last failure on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *qpnls_last_error(void);

// Built-in desk configuration.
struct QpnlsConfig *qpnls_config_default(void);

// Parses a TOML or JSON document (`format` is "toml" or "json").
//
// # Safety
// `text` and `format` must be NUL-terminated strings; `out` must be writable.
enum QpnlsStatus qpnls_config_parse(const char *text, const char *format, struct QpnlsConfig **out);

// # Safety
// `cfg` must come from this library and not be used afterwards. NULL is ignored.
void qpnls_config_free(struct QpnlsConfig *cfg);

// # Safety
// `cfg` must be a live handle.
enum QpnlsStatus qpnls_config_set_epsilon(struct QpnlsConfig *cfg, double epsilon);

// # Safety
// `cfg` must be a live handle.
enum QpnlsStatus qpnls_config_set_seed(struct QpnlsConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be a live handle.
enum QpnlsStatus qpnls_config_set_truncation(struct QpnlsConfig *cfg, uintptr_t nphi, uintptr_t nx);

// # Safety
// `cfg` must be a live handle and `gammas` must point to `len` doubles.
enum QpnlsStatus qpnls_config_set_gamma_list(struct QpnlsConfig *cfg,
                                             const double *gammas,
                                             uintptr_t len);

// Copies the TOML snapshot into `buf` (NUL-terminated, truncated to `cap`)
// and stores the full length, without the NUL, in `len`.
//
// # Safety
// `cfg` must be a live handle; `buf` must hold `cap` bytes or be NULL with `cap` 0.
enum QpnlsStatus qpnls_config_to_toml(const struct QpnlsConfig *cfg,
                                      char *buf,
                                      uintptr_t cap,
                                      uintptr_t *len);

// Runs one subcommand and writes its run directory to `out_dir`.
//
// # Safety
// `cfg` must be a live handle and `out_dir` a NUL-terminated path.
enum QpnlsStatus qpnls_run(const struct QpnlsConfig *cfg,
                           enum QpnlsSubcommand subcommand,
                           const char *out_dir);

// Excluded-parameter measure over the configured gamma list, for the
// unperturbed eigenvalues of the configured truncation.
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum QpnlsStatus qpnls_measure_sweep(const struct QpnlsConfig *cfg, struct QpnlsMeasure **out);

// # Safety
// `m` must come from this library and not be used afterwards. NULL is ignored.
void qpnls_measure_free(struct QpnlsMeasure *m);

// Number of gamma rows, 0 for NULL.
//
// # Safety
// `m` must be a live handle or NULL.
uintptr_t qpnls_measure_len(const struct QpnlsMeasure *m);

// Least-squares slope of ln(measure) against ln(gamma), NaN for NULL.
//
// # Safety
// `m` must be a live handle or NULL.
double qpnls_measure_fit_exponent(const struct QpnlsMeasure *m);

// Row `i`: gamma and excluded measure.
//
// # Safety
// `m` must be a live handle; `gamma` and `measure` must be writable.
enum QpnlsStatus qpnls_measure_row(const struct QpnlsMeasure *m,
                                   uintptr_t i,
                                   double *gamma,
                                   double *measure);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPNLS_H */

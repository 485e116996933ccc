#ifndef DREM_H
#define DREM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define DREM_LAW_GRADIENT 0

#define DREM_LAW_AVERAGING 1

typedef enum DremStatus {
  DREM_STATUS_OK = 0,
  DREM_STATUS_NULL_POINTER = 1,
  DREM_STATUS_INVALID_ARGUMENT = 2,
  DREM_STATUS_DIMENSION = 3,
  DREM_STATUS_SOLVER = 4,
  DREM_STATUS_CONFIG = 5,
  DREM_STATUS_INTEGRATION = 6,
  DREM_STATUS_DIAGNOSTICS = 7,
  DREM_STATUS_IO = 8,
  DREM_STATUS_PANIC = 9,
} DremStatus;

// Opaque handle holding one finished simulation.
typedef struct DremRun DremRun;

// Opaque scenario handle.
typedef struct DremScenario DremScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *drem_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *drem_version(void);

// Loads a scenario from a TOML file path or a bundled scenario name.
//
// # Safety
// `source` must be a NUL-terminated string; `out` must be writable.
enum DremStatus drem_scenario_load(const char *source, struct DremScenario **out);

// Parses a scenario from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum DremStatus drem_scenario_parse(const char *toml, struct DremScenario **out);

// Overrides one numeric setting: `horizon`, `step`, `sample_every`,
// `gamma`, `l` or `mu`. The scenario is re-validated; on failure it is
// left unchanged.
//
// # Safety
// `scenario` must come from this library; `key` must be NUL-terminated.
enum DremStatus drem_scenario_set(struct DremScenario *scenario, const char *key, double value);

// Steady-state reconstruction error bound of a plant scenario.
//
// # Safety
// `scenario` must come from this library; `out` must be writable.
enum DremStatus drem_scenario_bound(const struct DremScenario *scenario, double *out);

// # Safety
// `scenario` must come from this library and not be used afterwards.
void drem_scenario_free(struct DremScenario *scenario);

// Simulates `scenario` with law `DREM_LAW_GRADIENT` or `DREM_LAW_AVERAGING`.
// An integration that stops early still yields a run; check
// [`drem_run_failed`].
//
// # Safety
// `scenario` must come from this library; `out` must be writable.
enum DremStatus drem_run(const struct DremScenario *scenario, uint32_t law, struct DremRun **out);

// # Safety
// `run` must come from this library and not be used afterwards.
void drem_run_free(struct DremRun *run);

// Number of trace rows (samples); 0 for a NULL handle.
//
// # Safety
// `run` must be NULL or come from this library.
size_t drem_run_rows(const struct DremRun *run);

// Number of trace columns; 0 for a NULL handle.
//
// # Safety
// `run` must be NULL or come from this library.
size_t drem_run_columns(const struct DremRun *run);

// 1 if integration stopped before the horizon, 0 otherwise.
//
// # Safety
// `run` must come from this library.
int32_t drem_run_failed(const struct DremRun *run);

// Name of column `index`, owned by the run handle.
//
// # Safety
// `run` must come from this library; `out` must be writable.
enum DremStatus drem_run_column_name(const struct DremRun *run, size_t index, const char **out);

// Index of the column called `name`.
//
// # Safety
// `run` must come from this library; `name` NUL-terminated; `out` writable.
enum DremStatus drem_run_column_index(const struct DremRun *run, const char *name, size_t *out);

// Value at (`row`, `col`) of the trace.
//
// # Safety
// `run` must come from this library; `out` must be writable.
enum DremStatus drem_run_value(const struct DremRun *run, size_t row, size_t col, double *out);

// Copies column `col` into `buf`, which must hold `len >= rows` values.
//
// # Safety
// `run` must come from this library; `buf` must be writable for `len` values.
enum DremStatus drem_run_copy_column(const struct DremRun *run,
                                     size_t col,
                                     double *buf,
                                     size_t len);

// Run summary as a JSON object, owned by the run handle.
//
// # Safety
// `run` must be NULL or come from this library.
const char *drem_run_summary_json(const struct DremRun *run);

// Writes the trace as CSV.
//
// # Safety
// `run` must come from this library; `path` must be NUL-terminated.
enum DremStatus drem_run_write_csv(const struct DremRun *run, const char *path);

// Determinant of the `n x n` matrix `m`.
//
// # Safety
// `m` must hold `n * n` values; `out` must be writable.
enum DremStatus drem_det(const double *m, size_t n, double *out);

// Adjugate of the `n x n` matrix `m`, written to `out` (`n * n` values).
//
// # Safety
// `m` and `out` must each hold `n * n` values.
enum DremStatus drem_adjugate(const double *m, size_t n, double *out);

// Solves `A^T P + P A = -Q` for Hurwitz `A`; `P` goes to `out`.
//
// # Safety
// `a`, `q` and `out` must each hold `n * n` values.
enum DremStatus drem_solve_lyapunov(const double *a, const double *q, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DREM_H */

#ifndef DIRAC_THERMO_H
#define DIRAC_THERMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DtStatus {
  DT_STATUS_OK = 0,
  DT_STATUS_NULL_POINTER = 1,
  DT_STATUS_INVALID_UTF8 = 2,
  DT_STATUS_CONFIG = 3,
  DT_STATUS_INADMISSIBLE = 4,
  DT_STATUS_SOLVER = 5,
  DT_STATUS_IO = 6,
  DT_STATUS_OUT_OF_RANGE = 7,
  DT_STATUS_PANIC = 8,
} DtStatus;

/**
 * The trajectory table and summary of a finished run.
 */
typedef struct DtRun DtRun;

/**
 * A validated scenario configuration.
 */
typedef struct DtScenario DtScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *dt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dt_version(void);

/**
 * Parses and validates a JSON scenario. On success `*out` owns a new
 * handle to be released with [`dt_scenario_free`].
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum DtStatus dt_scenario_from_json(const char *json, struct DtScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from [`dt_scenario_from_json`] not yet freed.
 */
void dt_scenario_free(struct DtScenario *scenario);

/**
 * Replaces the integration method (`pontryagin`, `lagrange-dirac`,
 * `hamilton-dirac` or `reduced`).
 *
 * # Safety
 * `scenario` must be a live handle and `name` a NUL-terminated string.
 */
enum DtStatus dt_scenario_set_method(struct DtScenario *scenario, const char *name);

/**
 * Integrates the scenario. On success `*out` owns a new run handle to be
 * released with [`dt_run_free`].
 *
 * # Safety
 * `scenario` must be a live handle and `out` a writable pointer.
 */
enum DtStatus dt_run(const struct DtScenario *scenario, struct DtRun **out);

/**
 * # Safety
 * `run` must be null or a handle from [`dt_run`] not yet freed.
 */
void dt_run_free(struct DtRun *run);

/**
 * Number of trajectory rows (nodes), or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t dt_run_rows(const struct DtRun *run);

/**
 * Number of trajectory columns, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t dt_run_columns(const struct DtRun *run);

/**
 * Header of column `col` including its unit, owned by the run; null if out
 * of range.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *dt_run_column_name(const struct DtRun *run, size_t col);

/**
 * Stores the cell at (`row`, `col`) in `*value`; empty cells read as NaN.
 *
 * # Safety
 * `run` must be a live handle and `value` a writable pointer.
 */
enum DtStatus dt_run_value(const struct DtRun *run, size_t row, size_t col, double *value);

/**
 * Copies the column whose name (unit suffix optional) is `name` into
 * `buffer`, which must hold [`dt_run_rows`] values.
 *
 * # Safety
 * `run` must be a live handle, `name` a NUL-terminated string and `buffer`
 * writable for `len` doubles.
 */
enum DtStatus dt_run_column(const struct DtRun *run, const char *name, double *buffer, size_t len);

/**
 * 1 if every monitored tolerance was met, 0 otherwise or for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
int32_t dt_run_passed(const struct DtRun *run);

/**
 * Plain-text summary owned by the run; null for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
const char *dt_run_summary(const struct DtRun *run);

/**
 * Writes `trajectory.csv`, `invariants.csv` and `summary.txt` into `dir`,
 * creating it if needed.
 *
 * # Safety
 * `run` must be a live handle and `dir` a NUL-terminated path.
 */
enum DtStatus dt_run_write(const struct DtRun *run, const char *dir);

/**
 * Integrates the scenario with each comma-separated method in `methods` and
 * stores the largest node divergence from the first in `*max_divergence`.
 *
 * # Safety
 * `scenario` must be a live handle, `methods` a NUL-terminated string and
 * `max_divergence` a writable pointer.
 */
enum DtStatus dt_compare(const struct DtScenario *scenario,
                         const char *methods,
                         double *max_divergence);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIRAC_THERMO_H */

#ifndef MICROGRID_SVC_H
#define MICROGRID_SVC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of an API call.
 */
typedef enum MgStatus {
  MG_STATUS_OK = 0,
  MG_STATUS_NULL_POINTER = 1,
  MG_STATUS_INVALID_UTF8 = 2,
  MG_STATUS_CONFIG = 3,
  MG_STATUS_IO = 4,
  /**
   * The run diverged; the handle still holds the partial trace.
   */
  MG_STATUS_BLOWUP = 5,
  MG_STATUS_OUT_OF_RANGE = 6,
  MG_STATUS_PANIC = 7,
} MgStatus;

typedef enum MgController {
  MG_CONTROLLER_FTSM = 0,
  MG_CONTROLLER_BASELINE = 1,
} MgController;

/**
 * Per-DG trace column.
 */
typedef enum MgSignal {
  MG_SIGNAL_V_OD = 0,
  MG_SIGNAL_V_OQ = 1,
  MG_SIGNAL_ACTIVE_POWER = 2,
  MG_SIGNAL_REACTIVE_POWER = 3,
  MG_SIGNAL_DROOP_INPUT = 4,
  MG_SIGNAL_SURFACE = 5,
  MG_SIGNAL_ESTIMATE_VOLTAGE = 6,
  MG_SIGNAL_ESTIMATE_DERIVATIVE = 7,
  MG_SIGNAL_ESTIMATE_DRIFT = 8,
  MG_SIGNAL_TRUE_DERIVATIVE = 9,
  MG_SIGNAL_TRUE_DRIFT = 10,
} MgSignal;

/**
 * Result of one simulation.
 */
typedef struct MgRun MgRun;

/**
 * Editable scenario document.
 */
typedef struct MgScenario MgScenario;

/**
 * Summary of one inter-event window.
 */
typedef struct MgWindow {
  double start;
  double end;
  /**
   * Zero when the window is too short for statistics.
   */
  uint8_t available;
  /**
   * Zero when the voltages never settle; `settling` is then NaN.
   */
  uint8_t settled;
  double settling;
  double max_mean_error;
  double max_peak_error;
  double max_std;
  double dispersion_rel;
} MgWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mg_last_error(void);

/**
 * Library version, a static string.
 */
const char *mg_version(void);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is writable.
 */
enum MgStatus mg_scenario_load(const char *path, struct MgScenario **out);

/**
 * Parses and validates a scenario document.
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` is writable.
 */
enum MgStatus mg_scenario_parse(const char *text, struct MgScenario **out);

/**
 * Shipped scenario: `reference`, `tradeoff` or `chain<N>` with N >= 2.
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is writable.
 */
enum MgStatus mg_scenario_builtin(const char *name, struct MgScenario **out);

/**
 * # Safety
 * `scenario` comes from a `mg_scenario_*` constructor and is freed once.
 */
void mg_scenario_free(struct MgScenario *scenario);

/**
 * # Safety
 * `scenario` is a live handle.
 */
enum MgStatus mg_scenario_set_seed(struct MgScenario *scenario, uint64_t seed);

/**
 * Measurement noise variance (V^2).
 *
 * # Safety
 * `scenario` is a live handle.
 */
enum MgStatus mg_scenario_set_noise_variance(struct MgScenario *scenario, double variance);

/**
 * Enables (non-zero) or bypasses the state observer.
 *
 * # Safety
 * `scenario` is a live handle.
 */
enum MgStatus mg_scenario_set_observer(struct MgScenario *scenario, uint8_t enabled);

/**
 * # Safety
 * `scenario` is a live handle.
 */
enum MgStatus mg_scenario_set_controller(struct MgScenario *scenario, enum MgController kind);

/**
 * Shortens or extends the run; events past the new end are dropped.
 *
 * # Safety
 * `scenario` is a live handle.
 */
enum MgStatus mg_scenario_set_duration(struct MgScenario *scenario, double seconds);

/**
 * # Safety
 * `scenario` is a live handle; `out` is writable.
 */
enum MgStatus mg_scenario_dg_count(const struct MgScenario *scenario, size_t *out);

/**
 * Simulates the scenario. On [`MgStatus::Blowup`] `out` still receives a
 * handle holding the trace up to the failure.
 *
 * # Safety
 * `scenario` is a live handle; `out` is writable.
 */
enum MgStatus mg_run(const struct MgScenario *scenario, struct MgRun **out);

/**
 * # Safety
 * `run` comes from [`mg_run`] and is freed once.
 */
void mg_run_free(struct MgRun *run);

/**
 * # Safety
 * `run` is a live handle; `out` is writable.
 */
enum MgStatus mg_run_record_count(const struct MgRun *run, size_t *out);

/**
 * Copies the sample times into `buf`, which holds `len` values.
 *
 * # Safety
 * `run` is a live handle; `buf` points to `len` writable doubles.
 */
enum MgStatus mg_run_copy_time(const struct MgRun *run, double *buf, size_t len);

/**
 * Copies one signal of DG `dg` into `buf`, which holds `len` values.
 *
 * # Safety
 * `run` is a live handle; `buf` points to `len` writable doubles.
 */
enum MgStatus mg_run_copy_signal(const struct MgRun *run,
                                 size_t dg,
                                 enum MgSignal which,
                                 double *buf,
                                 size_t len);

/**
 * # Safety
 * `run` is a live handle; `out` is writable.
 */
enum MgStatus mg_run_window_count(const struct MgRun *run, size_t *out);

/**
 * # Safety
 * `run` is a live handle; `out` is writable.
 */
enum MgStatus mg_run_window(const struct MgRun *run, size_t index, struct MgWindow *out);

/**
 * Number of steady-state property violations (settling within 0.5 s and
 * the 1 V band in voltage mode, 2% sharing dispersion in trade-off mode).
 *
 * # Safety
 * `run` is a live handle; `out` is writable.
 */
enum MgStatus mg_run_check(const struct MgRun *run, size_t *out);

/**
 * Writes the full trace as CSV.
 *
 * # Safety
 * `run` is a live handle; `path` is a NUL-terminated string.
 */
enum MgStatus mg_run_write_csv(const struct MgRun *run, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICROGRID_SVC_H */

#ifndef LSOR_H
#define LSOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LsorStatus {
  LSOR_STATUS_OK = 0,
  LSOR_STATUS_NULL_POINTER = 1,
  LSOR_STATUS_INVALID_ARGUMENT = 2,
  LSOR_STATUS_CONFIG = 3,
  LSOR_STATUS_NUMERICAL = 4,
  LSOR_STATUS_IO = 5,
  LSOR_STATUS_PANIC = 6,
} LsorStatus;

typedef enum LsorVerdict {
  LSOR_VERDICT_QSS_ONLY = 0,
  LSOR_VERDICT_QSS_PLUS_BOUNDARY_LAYER = 1,
  LSOR_VERDICT_REPARTITION = 2,
} LsorVerdict;

/**
 * Opaque scenario handle.
 */
typedef struct LsorScenario LsorScenario;

/**
 * Opaque handle to a sampled trajectory.
 */
typedef struct LsorTrajectory LsorTrajectory;

/**
 * Outcome of the reduction assessment. `eps_double_star` is NaN when no
 * bound exists for the required settle time.
 */
typedef struct LsorDecision {
  enum LsorVerdict verdict;
  double epsilon;
  double eps_star;
  double eps_double_star;
  double settle_time;
  double t_required;
} LsorDecision;

/**
 * Summary of a full-versus-reduced comparison run.
 */
typedef struct LsorComparison {
  double mse_p;
  double mse_q;
  double timing_full;
  double timing_reduced;
  double speedup;
  size_t steps_full;
  size_t steps_reduced;
  double qss_max_residual;
  struct LsorDecision decision;
} LsorComparison;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *lsor_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *lsor_version(void);

/**
 * Bus voltage of the sag benchmark; NaN for invalid sag parameters.
 */
double lsor_sag_voltage(double t, double a, double b, double c, double d);

/**
 * Create a scenario with defaults for `model` (`motor-a`, `motor-b`,
 * `motor-c` or `dera`).
 *
 * # Safety
 * `model` must be a NUL-terminated string and `out` a writable pointer.
 */
enum LsorStatus lsor_scenario_new(const char *model, struct LsorScenario **out);

/**
 * Release a scenario. Null is ignored.
 *
 * # Safety
 * `s` must come from [`lsor_scenario_new`] and not be used afterwards.
 */
void lsor_scenario_free(struct LsorScenario *s);

/**
 * Set a numeric setting by dotted key, e.g. `sag.a` or `solver.rel_tol`.
 *
 * # Safety
 * `s` must be a live scenario and `key` a NUL-terminated string.
 */
enum LsorStatus lsor_scenario_set_number(struct LsorScenario *s, const char *key, double value);

/**
 * Set a string setting by dotted key, e.g. `model` or `solver.method`.
 *
 * # Safety
 * `s` must be a live scenario; `key` and `value` NUL-terminated strings.
 */
enum LsorStatus lsor_scenario_set_string(struct LsorScenario *s,
                                         const char *key,
                                         const char *value);

/**
 * Apply the overrides of a flat JSON configuration file.
 *
 * # Safety
 * `s` must be a live scenario and `path` a NUL-terminated string.
 */
enum LsorStatus lsor_scenario_load(struct LsorScenario *s, const char *path);

/**
 * Assess whether the scenario's model admits reduction.
 *
 * # Safety
 * `s` must be a live scenario and `out` a writable pointer.
 */
enum LsorStatus lsor_assess(const struct LsorScenario *s, struct LsorDecision *out);

/**
 * Run full and reduced models and summarize their differences.
 *
 * # Safety
 * `s` must be a live scenario and `out` a writable pointer.
 */
enum LsorStatus lsor_compare(const struct LsorScenario *s, struct LsorComparison *out);

/**
 * Integrate one variant (`full` or `reduced`) and return its sampled
 * trajectory.
 *
 * # Safety
 * `s` must be a live scenario, `variant` a NUL-terminated string and `out`
 * a writable pointer.
 */
enum LsorStatus lsor_simulate(const struct LsorScenario *s,
                              const char *variant,
                              struct LsorTrajectory **out);

/**
 * Release a trajectory. Null is ignored.
 *
 * # Safety
 * `t` must come from [`lsor_simulate`] and not be used afterwards.
 */
void lsor_trajectory_free(struct LsorTrajectory *t);

/**
 * Number of samples; 0 for null.
 *
 * # Safety
 * `t` must be null or a live trajectory.
 */
size_t lsor_trajectory_len(const struct LsorTrajectory *t);

/**
 * Number of columns (states then outputs); 0 for null.
 *
 * # Safety
 * `t` must be null or a live trajectory.
 */
size_t lsor_trajectory_column_count(const struct LsorTrajectory *t);

/**
 * Name of column `index`, or null when out of range. Owned by the handle.
 *
 * # Safety
 * `t` must be null or a live trajectory.
 */
const char *lsor_trajectory_column_name(const struct LsorTrajectory *t, size_t index);

/**
 * Copy the sample times into `buf` of capacity `cap`.
 *
 * # Safety
 * `t` must be a live trajectory and `buf` writable for `cap` doubles.
 */
enum LsorStatus lsor_trajectory_times(const struct LsorTrajectory *t, double *buf, size_t cap);

/**
 * Copy column `index` into `buf` of capacity `cap`.
 *
 * # Safety
 * `t` must be a live trajectory and `buf` writable for `cap` doubles.
 */
enum LsorStatus lsor_trajectory_column(const struct LsorTrajectory *t,
                                       size_t index,
                                       double *buf,
                                       size_t cap);

/**
 * Write the trajectory to `path` as `csv` or `json`.
 *
 * # Safety
 * `t` must be a live trajectory; `path` and `format` NUL-terminated strings.
 */
enum LsorStatus lsor_trajectory_export(const struct LsorTrajectory *t,
                                       const char *path,
                                       const char *format);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LSOR_H */

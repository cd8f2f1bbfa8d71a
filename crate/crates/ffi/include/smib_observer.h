#ifndef SMIB_OBSERVER_H
#define SMIB_OBSERVER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  SMIB_STATUS_OK = 0,
  SMIB_STATUS_NULL_POINTER = 1,
  SMIB_STATUS_INVALID_UTF8 = 2,
  SMIB_STATUS_CONFIG_ERROR = 3,
  SMIB_STATUS_INVALID_PARAMETERS = 4,
  SMIB_STATUS_LOSS_OF_OBSERVABILITY = 5,
  SMIB_STATUS_INTEGRATION_DIVERGED = 6,
  SMIB_STATUS_UNKNOWN_COLUMN = 7,
  SMIB_STATUS_OUT_OF_RANGE = 8,
  SMIB_STATUS_PANIC = 9,
} SmibStatus;

/**
 * A validated simulation scenario.
 */
typedef struct SmibScenario SmibScenario;

/**
 * A completed run.
 */
typedef struct SmibTrajectory SmibTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into this library on the same thread.
 */
const char *smib_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *smib_version(void);

/**
 * Builds a scenario from TOML config text.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a valid pointer.
 */
SmibStatus smib_scenario_from_config(const char *config, SmibScenario **out);

/**
 * Builds a scenario from a shipped preset name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
SmibStatus smib_scenario_from_preset(const char *name, SmibScenario **out);

/**
 * Overrides the integration horizon in seconds.
 *
 * # Safety
 * `scenario` must come from a `smib_scenario_from_*` call.
 */
SmibStatus smib_scenario_set_horizon(SmibScenario *scenario, double horizon);

/**
 * # Safety
 * `scenario` must come from a `smib_scenario_from_*` call, or be null.
 */
void smib_scenario_free(SmibScenario *scenario);

/**
 * Integrates a scenario.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
SmibStatus smib_run(const SmibScenario *scenario, SmibTrajectory **out);

/**
 * Number of records in a trajectory.
 *
 * # Safety
 * `traj` must be a live handle and `out` a valid pointer.
 */
SmibStatus smib_trajectory_len(const SmibTrajectory *traj, size_t *out);

/**
 * Value of a named CSV column at record `index`. `NaN` when the column does
 * not apply to the run.
 *
 * # Safety
 * `traj` must be a live handle, `name` a NUL-terminated string and `out` a
 * valid pointer.
 */
SmibStatus smib_trajectory_value(const SmibTrajectory *traj,
                                 const char *name,
                                 size_t index,
                                 double *out);

/**
 * Copies a whole named column into `buf`, which must hold `len` values with
 * `len` equal to the record count.
 *
 * # Safety
 * `traj` must be a live handle, `name` a NUL-terminated string and `buf`
 * valid for `len` writes.
 */
SmibStatus smib_trajectory_column(const SmibTrajectory *traj,
                                  const char *name,
                                  double *buf,
                                  size_t len);

/**
 * # Safety
 * `traj` must come from [`smib_run`], or be null.
 */
void smib_trajectory_free(SmibTrajectory *traj);

/**
 * PMU channels `(y1..y6)` for plant state `x` and bus signals.
 *
 * # Safety
 * `x` must point to 4 values and `out` to room for 6.
 */
SmibStatus smib_measure(const double *x, double y1_bus, double y2_bus, double x_qp, double *out);

/**
 * Jacobian (row-major, 9 values) of the alternative output map at `v` and
 * the residual of its null direction `(1, -v3, v2)`.
 *
 * # Safety
 * `v` must point to 3 values, `jacobian` to room for 9, `residual` valid.
 */
SmibStatus smib_certificate(const double *v, double y2, double *jacobian, double *residual);

/**
 * Mixes an extended regression `y_e = psi theta`: writes `det(psi)` and
 * `adj(psi) y_e`. `psi` is row-major 5x5.
 *
 * # Safety
 * `psi` must point to 25 values, `y_e` to 5, `delta` valid, `cal_y` to room for 5.
 */
SmibStatus smib_mix(const double *psi, const double *y_e, double *delta, double *cal_y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMIB_OBSERVER_H */

#ifndef AXISYM_EL_H
#define AXISYM_EL_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Grid fields readable through [`el_simulation_field`].
 */
typedef enum ElField {
  EL_FIELD_PSI = 0,
  EL_FIELD_OMEGA = 1,
  EL_FIELD_VELOCITY_R = 2,
  EL_FIELD_VELOCITY_Z = 3,
  EL_FIELD_DIRECTOR_R = 4,
  EL_FIELD_DIRECTOR_Z = 5,
  /**
   * Director angle; sphere mode only.
   */
  EL_FIELD_ANGLE = 6,
} ElField;

/**
 * Result codes. `EL_STATUS_OK` is zero.
 */
typedef enum ElStatus {
  EL_STATUS_OK = 0,
  EL_STATUS_NULL_POINTER = 1,
  EL_STATUS_INVALID_UTF8 = 2,
  EL_STATUS_CONFIG = 3,
  EL_STATUS_SOLVER = 4,
  EL_STATUS_OUTPUT = 5,
  EL_STATUS_ANALYSIS = 6,
  EL_STATUS_OUT_OF_RANGE = 7,
  EL_STATUS_BUFFER_TOO_SMALL = 8,
  EL_STATUS_PANIC = 9,
} ElStatus;

/**
 * Parsed and validated run configuration.
 */
typedef struct ElConfig ElConfig;

/**
 * Stepwise integration of one epsilon.
 */
typedef struct ElSimulation ElSimulation;

/**
 * Diagnostics of one time level.
 */
typedef struct ElRecord {
  double time;
  double e_kin;
  double e_el;
  double e_pen;
  double d_visc;
  double d_tension;
  double max_d;
  double lambda_t;
} ElRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *el_version(void);

/**
 * Length in bytes of the last error message on this thread, without the NUL.
 */
size_t el_last_error_length(void);

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to `cap - 1` bytes).
 * Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t el_last_error_message(char *buf, size_t cap);

/**
 * Parse a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out_config` must be writable.
 */
enum ElStatus el_config_parse(const char *json, struct ElConfig **out_config);

/**
 * # Safety
 * `config` must be null or come from [`el_config_parse`], and not be used afterwards.
 */
void el_config_free(struct ElConfig *config);

/**
 * Grid size `(n_r, n_z)` of a configuration.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ElStatus el_config_grid_size(const struct ElConfig *config, size_t *n_r, size_t *n_z);

/**
 * Number of epsilon values (1 unless the configuration lists several).
 *
 * # Safety
 * Pointers must be valid.
 */
enum ElStatus el_config_epsilon_count(const struct ElConfig *config, size_t *count);

/**
 * Single-epsilon run written to `out_dir`; `energy_holds` receives the energy inequality verdict.
 *
 * # Safety
 * `config` must be valid, `out_dir` NUL-terminated, `energy_holds` null or writable.
 */
enum ElStatus el_run(const struct ElConfig *config, const char *out_dir, bool *energy_holds);

/**
 * Sweep over the configured epsilon list; `failed` receives the number of members that errored.
 *
 * # Safety
 * As for [`el_run`].
 */
enum ElStatus el_sweep(const struct ElConfig *config, const char *out_dir, size_t *failed);

/**
 * Recompute the analysis files of a run or sweep directory. `config` may be null,
 * in which case the resolved configuration stored in the directory is used.
 *
 * # Safety
 * `config` null or valid; `dir` NUL-terminated.
 */
enum ElStatus el_analyze(const struct ElConfig *config, const char *dir);

/**
 * Stokes eigenbasis of the configured grid written to `out_dir`.
 *
 * # Safety
 * As for [`el_run`].
 */
enum ElStatus el_eig(const struct ElConfig *config, const char *out_dir);

/**
 * Set up the initial state for member `epsilon_index` of the configuration.
 *
 * # Safety
 * `config` must be valid and `out_sim` writable.
 */
enum ElStatus el_simulation_new(const struct ElConfig *config,
                                size_t epsilon_index,
                                struct ElSimulation **out_sim);

/**
 * # Safety
 * `sim` must be null or come from [`el_simulation_new`], and not be used afterwards.
 */
void el_simulation_free(struct ElSimulation *sim);

/**
 * Advance `steps` time steps. On error the state of the last completed step is kept.
 *
 * # Safety
 * `sim` must be valid.
 */
enum ElStatus el_simulation_step(struct ElSimulation *sim, size_t steps);

/**
 * Number of steps needed to reach the configured final time.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ElStatus el_simulation_total_steps(const struct ElSimulation *sim, size_t *steps);

/**
 * Time step and current time.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ElStatus el_simulation_time(const struct ElSimulation *sim, double *dt, double *time);

/**
 * Number of stored diagnostics records (steps taken plus one).
 *
 * # Safety
 * Pointers must be valid.
 */
enum ElStatus el_simulation_record_count(const struct ElSimulation *sim, size_t *count);

/**
 * Diagnostics record `index`; index 0 is the initial state.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ElStatus el_simulation_record(const struct ElSimulation *sim,
                                   size_t index,
                                   struct ElRecord *record);

/**
 * Copy a field into `buf` (`n_r * n_z` values, index `j * n_r + i`).
 *
 * # Safety
 * `sim` must be valid and `buf` valid for `len` doubles.
 */
enum ElStatus el_simulation_field(const struct ElSimulation *sim,
                                  enum ElField field,
                                  double *buf,
                                  size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AXISYM_EL_H */

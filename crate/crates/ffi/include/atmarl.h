#ifndef ATMARL_H
#define ATMARL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Controller under evaluation.
 */
typedef enum AtmarlApproach {
  ATMARL_APPROACH_AT_MARL = 0,
  ATMARL_APPROACH_RULE_BASED = 1,
  ATMARL_APPROACH_NAIVE_PARALLEL = 2,
  ATMARL_APPROACH_GOAL_HALVING = 3,
  ATMARL_APPROACH_ORACLE = 4,
} AtmarlApproach;

/**
 * Direction of a KPI series.
 */
typedef enum AtmarlDirection {
  ATMARL_DIRECTION_MAXIMIZE = 0,
  ATMARL_DIRECTION_MINIMIZE = 1,
} AtmarlDirection;

/**
 * UE distribution over the four gNodeBs.
 */
typedef enum AtmarlDistribution {
  ATMARL_DISTRIBUTION_UNIFORM = 0,
  ATMARL_DISTRIBUTION_GAUSSIAN = 1,
  ATMARL_DISTRIBUTION_GAMMA = 2,
} AtmarlDistribution;

/**
 * Result code of every fallible call.
 */
typedef enum AtmarlStatus {
  ATMARL_STATUS_OK = 0,
  ATMARL_STATUS_NULL_POINTER = 1,
  ATMARL_STATUS_INVALID_ARGUMENT = 2,
  ATMARL_STATUS_CONFIG = 3,
  ATMARL_STATUS_NUMERIC = 4,
  ATMARL_STATUS_CHECKPOINT = 5,
  ATMARL_STATUS_STAGE = 6,
  ATMARL_STATUS_IO = 7,
  /**
   * The KPI never entered its band; the output value is untouched.
   */
  ATMARL_STATUS_NOT_REACHED = 8,
  ATMARL_STATUS_PANIC = 9,
} AtmarlStatus;

typedef struct AtmarlArtifacts AtmarlArtifacts;

typedef struct AtmarlEmulator AtmarlEmulator;

typedef struct AtmarlScenario AtmarlScenario;

typedef struct AtmarlTrace AtmarlTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread. Valid until the next failing call.
 */
const char *atmarl_last_error(void);

/**
 * Built-in scenario: 3 intents when `five_intents` is 0, otherwise 5.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum AtmarlStatus atmarl_scenario_builtin(int32_t five_intents, struct AtmarlScenario **out);

/**
 * Parses a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum AtmarlStatus atmarl_scenario_load(const char *path, struct AtmarlScenario **out);

/**
 * Number of services (intents) in the scenario; 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t atmarl_scenario_services(const struct AtmarlScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void atmarl_scenario_free(struct AtmarlScenario *scenario);

/**
 * Emulator starting from the scenario's initial knobs.
 *
 * # Safety
 * `scenario` must be a live handle and `out` writable.
 */
enum AtmarlStatus atmarl_emulator_new(const struct AtmarlScenario *scenario,
                                      uint64_t seed,
                                      struct AtmarlEmulator **out);

/**
 * Advances one step and writes one KPI per service into `kpi_out`.
 *
 * # Safety
 * `emulator` must be live; `kpi_out` must hold `len` doubles.
 */
enum AtmarlStatus atmarl_emulator_step(struct AtmarlEmulator *emulator,
                                       double *kpi_out,
                                       size_t len);

/**
 * Served rate per service (Mbps, summed over gNodeBs) of the last step.
 *
 * # Safety
 * `emulator` must be live; `served_out` must hold `len` doubles.
 */
enum AtmarlStatus atmarl_emulator_served(const struct AtmarlEmulator *emulator,
                                         double *served_out,
                                         size_t len);

/**
 * Sets a service's packet priority (1..=5).
 *
 * # Safety
 * `emulator` must be live.
 */
enum AtmarlStatus atmarl_emulator_set_priority(struct AtmarlEmulator *emulator,
                                               size_t service,
                                               uint8_t priority);

/**
 * Sets a service's MBR; `mbr_mbps` must be one of the ladder values.
 *
 * # Safety
 * `emulator` must be live.
 */
enum AtmarlStatus atmarl_emulator_set_mbr(struct AtmarlEmulator *emulator,
                                          size_t service,
                                          double mbr_mbps);

/**
 * # Safety
 * `emulator` must be live.
 */
enum AtmarlStatus atmarl_emulator_set_distribution(struct AtmarlEmulator *emulator,
                                                   enum AtmarlDistribution distribution);

/**
 * # Safety
 * `emulator` must be null or a handle not yet freed.
 */
void atmarl_emulator_free(struct AtmarlEmulator *emulator);

/**
 * Weighted water-filling of one gNodeB.
 *
 * # Safety
 * All arrays must hold `len` elements.
 */
enum AtmarlStatus atmarl_allocate_capacity(const double *offered,
                                           const uint8_t *priority,
                                           const double *mbr,
                                           size_t len,
                                           double bandwidth,
                                           double *served_out);

/**
 * IAE from the first in-band sample; [`AtmarlStatus::NotReached`] if the band is never entered.
 *
 * # Safety
 * `values` must hold `len` doubles and `out` be writable.
 */
enum AtmarlStatus atmarl_iae(const double *values,
                             size_t len,
                             double target,
                             enum AtmarlDirection direction,
                             double *out);

/**
 * First step after which the series stays within `tolerance` of the target.
 *
 * # Safety
 * `values` must hold `len` doubles and `out` be writable.
 */
enum AtmarlStatus atmarl_convergence_time(const double *values,
                                          size_t len,
                                          double target,
                                          enum AtmarlDirection direction,
                                          double tolerance,
                                          size_t *out);

/**
 * Peak-to-peak spread from step `from` on, relative to the target.
 *
 * # Safety
 * `values` must hold `len` doubles and `out` be writable.
 */
enum AtmarlStatus atmarl_oscillation_amplitude(const double *values,
                                               size_t len,
                                               double target,
                                               size_t from,
                                               double *out);

/**
 * Pre-trains both MARL systems for `seed` on `scenario`.
 *
 * # Safety
 * `scenario` must be live and `out` writable.
 */
enum AtmarlStatus atmarl_pretrain(const struct AtmarlScenario *scenario,
                                  uint64_t seed,
                                  struct AtmarlArtifacts **out);

/**
 * Trains the supervisor `approach` needs. A no-op for supervisor-free approaches.
 *
 * # Safety
 * Both handles must be live.
 */
enum AtmarlStatus atmarl_train_supervisor(struct AtmarlArtifacts *artifacts,
                                          const struct AtmarlScenario *scenario,
                                          enum AtmarlApproach approach,
                                          size_t episodes);

/**
 * # Safety
 * `artifacts` must be live and `path` NUL-terminated.
 */
enum AtmarlStatus atmarl_artifacts_save(const struct AtmarlArtifacts *artifacts, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum AtmarlStatus atmarl_artifacts_load(const char *path, struct AtmarlArtifacts **out);

/**
 * # Safety
 * `artifacts` must be null or a handle not yet freed.
 */
void atmarl_artifacts_free(struct AtmarlArtifacts *artifacts);

/**
 * Runs one evaluation episode of `episode_len` steps.
 *
 * # Safety
 * Both handles must be live and `out` writable.
 */
enum AtmarlStatus atmarl_evaluate(const struct AtmarlArtifacts *artifacts,
                                  const struct AtmarlScenario *scenario,
                                  enum AtmarlApproach approach,
                                  size_t episode_len,
                                  struct AtmarlTrace **out);

/**
 * Number of rows (steps) in the trace; 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or live.
 */
size_t atmarl_trace_len(const struct AtmarlTrace *trace);

/**
 * KPI series of service `service` over the whole trace.
 *
 * # Safety
 * `trace` must be live and `out` hold `len` doubles.
 */
enum AtmarlStatus atmarl_trace_kpi(const struct AtmarlTrace *trace,
                                   size_t service,
                                   double *out,
                                   size_t len);

/**
 * # Safety
 * `trace` must be live and `path` NUL-terminated.
 */
enum AtmarlStatus atmarl_trace_write_csv(const struct AtmarlTrace *trace, const char *path);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void atmarl_trace_free(struct AtmarlTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATMARL_H */

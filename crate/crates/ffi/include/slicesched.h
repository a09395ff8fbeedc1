/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef SLICESCHED_H
#define SLICESCHED_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_UTF8 = 2,
  SS_STATUS_IO = 3,
  SS_STATUS_INVALID_CONFIG = 4,
  SS_STATUS_INVALID_GOP = 5,
  SS_STATUS_INVALID_POWER_MODEL = 6,
  SS_STATUS_INVALID_TRACE = 7,
  SS_STATUS_INVALID_POLICY = 8,
  SS_STATUS_INVALID_ARGUMENT = 9,
  SS_STATUS_STATE_SPACE_TOO_LARGE = 10,
  SS_STATUS_NOT_CONVERGED = 11,
  SS_STATUS_TRACE_UNDERRUN = 12,
  SS_STATUS_PANIC = 13,
  SS_STATUS_OTHER = 14,
} SsStatus;

typedef enum SsScheduler {
  SS_SCHEDULER_PROPOSED = 0,
  SS_SCHEDULER_PROPOSED_COORDINATED = 1,
  SS_SCHEDULER_OPT_MEMS = 2,
} SsScheduler;

// Parsed run configuration.
typedef struct SsConfig SsConfig;

// Solved per-frame policies.
typedef struct SsPolicy SsPolicy;

// Per-slice cycle trace.
typedef struct SsTrace SsTrace;

// Solver summary.
typedef struct SsSolveReport {
  uint64_t iterations;
  double residual;
  bool schedules_any_slice;
} SsSolveReport;

// Aggregate metrics of one simulation. Miss fractions are per frame type.
typedef struct SsMetrics {
  uint64_t processors;
  double duration_s;
  double energy_j;
  double avg_power_per_core_w;
  double avg_total_power_w;
  double decoded_frame_rate_fps;
  double miss_fraction_i;
  double miss_fraction_p;
  double miss_fraction_b;
  uint64_t arrived_slices;
  uint64_t decoded_slices;
  uint64_t dropped_slices;
  uint64_t pending_slices;
} SsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *ss_last_error_message(void);

// Library version string.
const char *ss_version(void);

// Per-slot completion probability of an exponential slice with mean
// `mean_cycles` at `frequency_hz` over `slot_duration` seconds.
//
// # Safety
// `out` must be null or point to writable memory for a `double`.
enum SsStatus ss_decode_prob(double frequency_hz,
                             double slot_duration,
                             double mean_cycles,
                             double *out);

// Loads a TOML config file.
//
// # Safety
// `path` must be null or a NUL-terminated string; `out` must be null or
// writable.
enum SsStatus ss_config_load(const char *path, struct SsConfig **out);

// Parses a TOML config from text.
//
// # Safety
// As for [`ss_config_load`].
enum SsStatus ss_config_parse(const char *text, struct SsConfig **out);

// Overrides the Lagrange multiplier.
//
// # Safety
// `config` must be null or a live handle.
enum SsStatus ss_config_set_lambda(struct SsConfig *config, double lambda);

// Overrides the processor count.
//
// # Safety
// `config` must be null or a live handle.
enum SsStatus ss_config_set_cores(struct SsConfig *config, uint32_t cores);

// Overrides the random seed.
//
// # Safety
// `config` must be null or a live handle.
enum SsStatus ss_config_set_seed(struct SsConfig *config, uint64_t seed);

// Selects the scheduler used by [`ss_simulate`]; `scheduler` is an
// [`SsScheduler`] value.
//
// # Safety
// `config` must be null or a live handle.
enum SsStatus ss_config_set_scheduler(struct SsConfig *config, uint32_t scheduler);

// Sets the number of measured GOPs; 0 restores the default.
//
// # Safety
// `config` must be null or a live handle.
enum SsStatus ss_config_set_gops(struct SsConfig *config, uint64_t gops);

// # Safety
// `config` must be null or a handle not yet freed.
void ss_config_free(struct SsConfig *config);

// Reads a trace CSV.
//
// # Safety
// As for [`ss_config_load`].
enum SsStatus ss_trace_read(const char *path, struct SsTrace **out);

// Samples a synthetic trace covering `gops` measured GOPs (0 for the
// config's run length) from the config's complexity model and seed.
//
// # Safety
// `config` must be null or a live handle; `out` must be null or writable.
enum SsStatus ss_trace_generate(const struct SsConfig *config, uint64_t gops, struct SsTrace **out);

// Writes a trace as CSV.
//
// # Safety
// `trace` must be null or a live handle; `path` null or NUL-terminated.
enum SsStatus ss_trace_write(const struct SsTrace *trace, const char *path);

// Number of GOPs in the trace, or 0 for a null handle.
//
// # Safety
// `trace` must be null or a live handle.
uint64_t ss_trace_num_gops(const struct SsTrace *trace);

// # Safety
// `trace` must be null or a handle not yet freed.
void ss_trace_free(struct SsTrace *trace);

// Solves the frame-level problem of the config. `report` may be null.
//
// # Safety
// `config` must be null or a live handle; `out` must be null or writable;
// `report` null or writable.
enum SsStatus ss_solve(const struct SsConfig *config,
                       struct SsPolicy **out,
                       struct SsSolveReport *report);

// Reads a policy file.
//
// # Safety
// As for [`ss_config_load`].
enum SsStatus ss_policy_read(const char *path, struct SsPolicy **out);

// Writes a policy in the text format read by [`ss_policy_read`].
//
// # Safety
// `policy` must be null or a live handle; `path` null or NUL-terminated.
enum SsStatus ss_policy_write(const struct SsPolicy *policy, const char *path);

// Processor count the policy was solved for, or 0 for a null handle.
//
// # Safety
// `policy` must be null or a live handle.
uint32_t ss_policy_processors(const struct SsPolicy *policy);

// Actions of frame `position` in state (`phase`, `buffer`, `deps_met`).
// Writes one frequency index and one scheduled flag per processor into
// `freqs` and `scheduled`, each of length `len`, and the processor count to
// `written`. A state without a stored action yields idle processors at the
// lowest frequency.
//
// # Safety
// `policy` must be null or a live handle; `freqs` and `scheduled` must be
// null or hold `len` elements; `written` null or writable.
enum SsStatus ss_policy_actions(const struct SsPolicy *policy,
                                uint32_t position,
                                uint32_t phase,
                                uint32_t buffer,
                                bool deps_met,
                                uint32_t *freqs,
                                bool *scheduled,
                                size_t len,
                                size_t *written);

// # Safety
// `policy` must be null or a handle not yet freed.
void ss_policy_free(struct SsPolicy *policy);

// Simulates the config's scheduler. A null `trace` uses a synthetic trace
// from the config; a null `policy` solves one when the scheduler needs it.
//
// # Safety
// `config` must be a live handle; `trace` and `policy` null or live
// handles; `out` null or writable.
enum SsStatus ss_simulate(const struct SsConfig *config,
                          const struct SsTrace *trace,
                          const struct SsPolicy *policy,
                          struct SsMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLICESCHED_H */

#ifndef AVSIM_H
#define AVSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AvsimStatus {
  AVSIM_STATUS_OK = 0,
  AVSIM_STATUS_NULL_ARGUMENT = 1,
  AVSIM_STATUS_INVALID_UTF8 = 2,
  AVSIM_STATUS_INVALID_JSON = 3,
  /**
   * Scenario-API error; the code is in [`avsim_last_error_code`].
   */
  AVSIM_STATUS_API = 4,
  AVSIM_STATUS_SNAPSHOT = 5,
  AVSIM_STATUS_PANIC = 6,
} AvsimStatus;

/**
 * Opaque simulator handle.
 */
typedef struct AvsimSim AvsimSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *avsim_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library on this thread.
 */
const char *avsim_last_error(void);

/**
 * Machine-readable code of the last failed call on this thread, or null.
 */
const char *avsim_last_error_code(void);

/**
 * New simulator on an empty map. Null on failure.
 */
struct AvsimSim *avsim_sim_new(uint64_t seed);

/**
 * Frees a handle; null is ignored.
 *
 * # Safety
 * `sim` must come from [`avsim_sim_new`] and not be used afterwards.
 */
void avsim_sim_free(struct AvsimSim *sim);

/**
 * Executes a scenario-API call. `params_json` may be null. On success
 * `*out_json` receives the result JSON (free with
 * [`avsim_string_free`]); on failure it is set to null.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum AvsimStatus avsim_sim_call(struct AvsimSim *sim,
                                const char *method,
                                const char *params_json,
                                char **out_json);

/**
 * Advances `ticks` steps unpaced.
 *
 * # Safety
 * `sim` must be a valid handle.
 */
enum AvsimStatus avsim_sim_step(struct AvsimSim *sim, uint64_t ticks);

/**
 * Current tick, 0 for a null handle.
 *
 * # Safety
 * `sim` must be a valid handle or null.
 */
uint64_t avsim_sim_tick(const struct AvsimSim *sim);

/**
 * Serializes the world. The buffer is freed with [`avsim_bytes_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum AvsimStatus avsim_sim_snapshot(const struct AvsimSim *sim, uint8_t **out, size_t *out_len);

/**
 * Replaces the world with a snapshot.
 *
 * # Safety
 * `data` must point to `len` readable bytes.
 */
enum AvsimStatus avsim_sim_restore(struct AvsimSim *sim, const uint8_t *data, size_t len);

/**
 * Frees a string returned by the library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void avsim_string_free(char *s);

/**
 * Frees a buffer from [`avsim_sim_snapshot`]; null is ignored.
 *
 * # Safety
 * `data`/`len` must be exactly as returned.
 */
void avsim_bytes_free(uint8_t *data, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AVSIM_H */

#ifndef GBAC_H
#define GBAC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum GbacStatus {
  GBAC_STATUS_OK = 0,
  GBAC_STATUS_NULL_POINTER = 1,
  GBAC_STATUS_INVALID_ARGUMENT = 2,
  GBAC_STATUS_BUFFER_TOO_SMALL = 3,
  GBAC_STATUS_CONFIG = 10,
  GBAC_STATUS_NUMERICAL = 11,
  GBAC_STATUS_ENV = 12,
  GBAC_STATUS_FRAME = 13,
  GBAC_STATUS_PROTOCOL = 14,
  GBAC_STATUS_CONNECTION = 15,
  GBAC_STATUS_CHECKPOINT = 16,
  GBAC_STATUS_DIGEST_MISMATCH = 17,
  GBAC_STATUS_IO = 18,
  GBAC_STATUS_PANIC = 99,
} GbacStatus;

/**
 * Sampling mode for [`gbac_agent_act`].
 */
typedef enum GbacMode {
  GBAC_MODE_SAMPLE = 0,
  GBAC_MODE_GREEDY = 1,
  GBAC_MODE_RANDOM_LOC = 2,
} GbacMode;

/**
 * Agent plus its recurrent state and sampling stream.
 */
typedef struct GbacAgent GbacAgent;

/**
 * A built-in environment instance.
 */
typedef struct GbacEnv GbacEnv;

/**
 * One decision of an agent.
 */
typedef struct GbacStep {
  uint32_t action;
  /**
   * Glimpse center chosen for the next frame.
   */
  float loc_x;
  float loc_y;
  float value;
  double action_logprob;
  double loc_logprob;
} GbacStep;

typedef struct GbacEnvSpec {
  size_t frame_h;
  size_t frame_w;
  size_t action_count;
  uint64_t max_episode_steps;
} GbacEnvSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *gbac_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gbac_version(void);

/**
 * Number of glimpse pixels: `num_patches * patch_size^2`.
 *
 * # Safety
 * `out` must be NULL or point to a writable `size_t`.
 */
enum GbacStatus gbac_pixel_budget(size_t num_patches, size_t patch_size, size_t *out);

/**
 * Trainable scalar count of the network described by `arch_json`
 * (an `ArchConfig` object) for the given glimpse geometry.
 *
 * # Safety
 * `arch_json` must be a NUL-terminated string; `out` a writable `size_t`.
 */
enum GbacStatus gbac_param_count(const char *arch_json,
                                 size_t num_patches,
                                 size_t patch_size,
                                 size_t *out);

/**
 * Extracts the glimpse centered at `(loc_x, loc_y)` from an `h x w` frame of
 * values in `[0, 1]`. Patches are written focal first, each row-major.
 * `center_used`, if not NULL, receives the two coordinates actually observed.
 *
 * # Safety
 * `frame` must hold `h * w` floats, `out` `out_len` floats, and
 * `center_used` two floats when not NULL.
 */
enum GbacStatus gbac_extract_glimpse(const float *frame,
                                     size_t h,
                                     size_t w,
                                     float loc_x,
                                     float loc_y,
                                     size_t num_patches,
                                     size_t patch_size,
                                     float *out,
                                     size_t out_len,
                                     float *center_used);

/**
 * Creates a freshly initialised agent for the run config given as JSON text.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` a writable pointer.
 */
enum GbacStatus gbac_agent_new(const char *config_json, uint64_t seed, struct GbacAgent **out);

/**
 * Loads a checkpoint, refusing it if its digest does not match the run config file.
 *
 * # Safety
 * Both paths must be NUL-terminated strings; `out` a writable pointer.
 */
enum GbacStatus gbac_agent_load(const char *config_path,
                                const char *checkpoint_path,
                                uint64_t seed,
                                struct GbacAgent **out);

/**
 * Releases an agent. NULL is ignored.
 *
 * # Safety
 * `agent` must be NULL or a handle from this library not yet freed.
 */
void gbac_agent_free(struct GbacAgent *agent);

/**
 * # Safety
 * `agent` must be a live handle; `out` a writable `size_t`.
 */
enum GbacStatus gbac_agent_param_count(const struct GbacAgent *agent, size_t *out);

/**
 * Clears the recurrent state and recenters the glimpse, as at an episode start.
 *
 * # Safety
 * `agent` must be a live handle.
 */
enum GbacStatus gbac_agent_reset(struct GbacAgent *agent);

/**
 * Acts on one `h x w` frame and advances the agent's recurrent state.
 *
 * # Safety
 * `agent` must be a live handle, `frame` hold `h * w` floats, `out` be writable.
 */
enum GbacStatus gbac_agent_act(struct GbacAgent *agent,
                               const float *frame,
                               size_t h,
                               size_t w,
                               enum GbacMode mode,
                               struct GbacStep *out);

/**
 * Opens a built-in environment (`"minipong"` or `"seekdot"`).
 *
 * # Safety
 * `id` must be a NUL-terminated string; `out` a writable pointer.
 */
enum GbacStatus gbac_env_new(const char *id, uint64_t seed, struct GbacEnv **out);

/**
 * Releases an environment. NULL is ignored.
 *
 * # Safety
 * `env` must be NULL or a handle from this library not yet freed.
 */
void gbac_env_free(struct GbacEnv *env);

/**
 * # Safety
 * `env` must be a live handle; `out` writable.
 */
enum GbacStatus gbac_env_spec(const struct GbacEnv *env, struct GbacEnvSpec *out);

/**
 * Starts an episode and writes its first frame. A negative `seed` keeps the current stream.
 *
 * # Safety
 * `env` must be a live handle; `frame_out` must hold `frame_len` floats.
 */
enum GbacStatus gbac_env_reset(struct GbacEnv *env,
                               int64_t seed,
                               float *frame_out,
                               size_t frame_len);

/**
 * Advances one step and writes the next frame, the reward and the done flag.
 *
 * # Safety
 * `env` must be a live handle; `frame_out` must hold `frame_len` floats;
 * `reward` and `done` must be writable.
 */
enum GbacStatus gbac_env_step(struct GbacEnv *env,
                              size_t action,
                              float *frame_out,
                              size_t frame_len,
                              float *reward,
                              bool *done);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GBAC_H */

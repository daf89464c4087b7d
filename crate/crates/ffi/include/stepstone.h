#ifndef STEPSTONE_H
#define STEPSTONE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StsStatus {
  STS_STATUS_OK = 0,
  STS_STATUS_NULL_POINTER = 1,
  STS_STATUS_INVALID_ARGUMENT = 2,
  STS_STATUS_IO = 3,
  STS_STATUS_PARSE = 4,
  STS_STATUS_MISSING_MODEL = 5,
  STS_STATUS_SEARCH = 6,
  STS_STATUS_OUT_OF_RANGE = 7,
  STS_STATUS_PANIC = 8,
} StsStatus;

typedef enum StsGait {
  STS_GAIT_TROT = 0,
  STS_GAIT_JUMP = 1,
} StsGait;

/**
 * Stepping-stone environment.
 */
typedef struct StsEnvironment StsEnvironment;

/**
 * Trained network (classifier or predictor/adjuster).
 */
typedef struct StsModel StsModel;

/**
 * Outcome of one search.
 */
typedef struct StsPlanResult StsPlanResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread; do not free.
 */
const char *sts_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sts_string_free(char *s);

/**
 * Generates the seeded default grid with stones of side `side` meters.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum StsStatus sts_environment_generate(uint64_t seed, double side, struct StsEnvironment **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum StsStatus sts_environment_load(const char *path, struct StsEnvironment **out);

/**
 * JSON form of the environment; free with [`sts_string_free`].
 *
 * # Safety
 * `env` must be a live handle; `out` a valid pointer.
 */
enum StsStatus sts_environment_to_json(const struct StsEnvironment *env, char **out);

/**
 * Number of live stones, or 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t sts_environment_stone_count(const struct StsEnvironment *env);

/**
 * # Safety
 * `env` must be null or a handle not yet freed.
 */
void sts_environment_free(struct StsEnvironment *env);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum StsStatus sts_model_load(const char *path, struct StsModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void sts_model_free(struct StsModel *model);

/**
 * Plans on `env`. `classifier` and `dynamics` may be null when the
 * configuration does not need them. `config_json` is null for the defaults
 * or a JSON object overriding any search setting.
 *
 * # Safety
 * Handles must be null or live; `config_json` null or NUL-terminated; `out`
 * a valid pointer.
 */
enum StsStatus sts_plan(const struct StsEnvironment *env,
                        enum StsGait gait,
                        const struct StsModel *classifier,
                        const struct StsModel *dynamics,
                        const char *config_json,
                        struct StsPlanResult **out);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
bool sts_plan_success(const struct StsPlanResult *result);

/**
 * Number of contact states in the plan, start included.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t sts_plan_len(const struct StsPlanResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
uint64_t sts_plan_oracle_calls(const struct StsPlanResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
uint64_t sts_plan_iterations(const struct StsPlanResult *result);

/**
 * Copies the stone ids of plan step `step` into `ids`, which holds `len`
 * entries; `len` must equal the number of effectors.
 *
 * # Safety
 * `result` must be a live handle and `ids` point to `len` writable values.
 */
enum StsStatus sts_plan_state(const struct StsPlanResult *result,
                              size_t step,
                              uint16_t *ids,
                              size_t len);

/**
 * JSON form of the result; free with [`sts_string_free`].
 *
 * # Safety
 * `result` must be a live handle; `out` a valid pointer.
 */
enum StsStatus sts_plan_to_json(const struct StsPlanResult *result, char **out);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void sts_plan_free(struct StsPlanResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEPSTONE_H */

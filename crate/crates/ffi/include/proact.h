#ifndef PROACT_H
#define PROACT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Action kinds, matching the `action`, `search` and `answer` wire choices.
 */
typedef enum ProactAction {
  PROACT_ACTION_QUERY = 0,
  PROACT_ACTION_SEARCH = 1,
  PROACT_ACTION_ANSWER = 2,
} ProactAction;

/**
 * Result of every fallible call.
 */
typedef enum ProactStatus {
  PROACT_STATUS_OK = 0,
  PROACT_STATUS_NULL_POINTER = 1,
  PROACT_STATUS_INVALID_UTF8 = 2,
  PROACT_STATUS_UNKNOWN_TASK = 3,
  PROACT_STATUS_INVALID_ARGUMENT = 4,
  PROACT_STATUS_EPISODE_DONE = 5,
  PROACT_STATUS_BUFFER_TOO_SMALL = 6,
  PROACT_STATUS_INTERNAL = 7,
} ProactStatus;

/**
 * Opaque episode handle.
 */
typedef struct ProactSession ProactSession;

/**
 * Outcome of one step.
 */
typedef struct ProactStep {
  double reward;
  bool done;
  uint32_t turn;
  uint32_t remaining_budget;
} ProactStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens an episode for `task_id` (for example `function:7`). A `budget` of
 * 0 selects the environment default. Lambdas shape the exported trajectory.
 *
 * # Safety
 * `task_id` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ProactStatus proact_session_new(const char *task_id,
                                     uint32_t budget,
                                     double lambda_ans,
                                     double lambda_think,
                                     struct ProactSession **out);

/**
 * Releases a session. Null is ignored.
 *
 * # Safety
 * `session` must come from `proact_session_new` and not be used afterwards.
 */
void proact_session_free(struct ProactSession *session);

/**
 * Plays one turn. Empty `content` is a malformed action and wastes the turn.
 *
 * # Safety
 * Pointers must be valid; `content` NUL-terminated.
 */
enum ProactStatus proact_session_step(struct ProactSession *session,
                                      enum ProactAction action,
                                      const char *content,
                                      struct ProactStep *out);

/**
 * Ends the episode early. Before the first turn this is rejected.
 *
 * # Safety
 * `session` must be valid.
 */
enum ProactStatus proact_session_stop(struct ProactSession *session);

/**
 * Copies the latest observation (the task intro before any step).
 *
 * # Safety
 * `session` must be valid; `buf` must hold `cap` bytes; `needed` may be null.
 */
enum ProactStatus proact_session_observation(const struct ProactSession *session,
                                             char *buf,
                                             size_t cap,
                                             size_t *needed);

/**
 * Copies the shaped trajectory as one JSON line. An unfinished episode is
 * reported as stopped by the agent.
 *
 * # Safety
 * As for `proact_session_observation`.
 */
enum ProactStatus proact_session_trajectory_json(const struct ProactSession *session,
                                                 char *buf,
                                                 size_t cap,
                                                 size_t *needed);

/**
 * Static description of a status code.
 */
const char *proact_status_message(enum ProactStatus status);

/**
 * Library version, NUL-terminated.
 */
const char *proact_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROACT_H */

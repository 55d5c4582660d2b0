#ifndef XBO_H
#define XBO_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XboStatus {
  XBO_STATUS_OK = 0,
  XBO_STATUS_NULL_POINTER = 1,
  XBO_STATUS_INVALID_UTF8 = 2,
  XBO_STATUS_OUT_OF_DOMAIN = 3,
  XBO_STATUS_UNCOOKABLE = 4,
  XBO_STATUS_INVALID_ARGUMENT = 5,
  XBO_STATUS_INVALID_SCENARIOS = 6,
  XBO_STATUS_TRIALS_EXHAUSTED = 7,
  XBO_STATUS_FIXED_PARAMETER_MODIFIED = 8,
  XBO_STATUS_NO_ADJUSTMENT = 9,
  XBO_STATUS_SESSION_COMPLETED = 10,
  XBO_STATUS_CONFLICT = 11,
  XBO_STATUS_PANIC = 99,
} XboStatus;

/**
 * Feedback grades, in increasing cooking time.
 */
typedef enum XboGrade {
  XBO_GRADE_UNDERCOOKED = 0,
  XBO_GRADE_SLIGHTLY_UNDERCOOKED = 1,
  XBO_GRADE_PERFECT = 2,
  XBO_GRADE_SLIGHTLY_OVERCOOKED = 3,
  XBO_GRADE_OVERCOOKED = 4,
} XboGrade;

typedef enum XboCondition {
  XBO_CONDITION_VISUAL = 0,
  XBO_CONDITION_RULES = 1,
  XBO_CONDITION_LANGUAGE = 2,
} XboCondition;

/**
 * Loaded scenario set.
 */
typedef struct XboCatalog XboCatalog;

/**
 * A study session bound to the catalog it was started from.
 */
typedef struct XboSession XboSession;

typedef struct XboEggParameters {
  double mass_g;
  double lambda;
  double ywr;
  double t_egg_c;
  double t_yolk_c;
  double altitude_m;
} XboEggParameters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *xbo_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void xbo_string_free(char *s);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum XboStatus xbo_boiling_point_c(double altitude_m, double *out);

/**
 * # Safety
 * `params` must be readable; `out` writable.
 */
enum XboStatus xbo_cooking_time_s(const struct XboEggParameters *params, double *out);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum XboStatus xbo_classify(double cook_time_s, enum XboGrade *out);

/**
 * Loads the bundled scenarios.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum XboStatus xbo_catalog_shipped(struct XboCatalog **out);

/**
 * Loads scenarios from a JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` writable.
 */
enum XboStatus xbo_catalog_from_json(const char *json, struct XboCatalog **out);

/**
 * # Safety
 * `catalog` must come from this library (or be NULL).
 */
void xbo_catalog_free(struct XboCatalog *catalog);

/**
 * Starts a session. The session keeps the catalog alive on its own, so
 * the catalog handle may be freed afterwards.
 *
 * # Safety
 * `catalog` must be a live handle, `id` a NUL-terminated string, `out` writable.
 */
enum XboStatus xbo_session_start(const struct XboCatalog *catalog,
                                 const char *id,
                                 enum XboCondition condition,
                                 uint64_t seed,
                                 struct XboSession **out);

/**
 * Submits a trial for the current egg and reports its grade.
 *
 * # Safety
 * `session` must be a live handle; `params` readable; `grade` writable.
 */
enum XboStatus xbo_session_submit(struct XboSession *session,
                                  const struct XboEggParameters *params,
                                  enum XboGrade *grade);

/**
 * Client view of the session as JSON (no optimal values).
 *
 * # Safety
 * `session` must be a live handle; `out` writable.
 */
enum XboStatus xbo_session_view_json(const struct XboSession *session, char **out);

/**
 * Explanation for the current egg as `{format, payload}` JSON.
 *
 * # Safety
 * `session` must be a live handle; `out` writable.
 */
enum XboStatus xbo_session_explanation_json(struct XboSession *session, char **out);

/**
 * # Safety
 * `session` must be a live handle; `out` writable.
 */
enum XboStatus xbo_session_metrics_json(const struct XboSession *session, char **out);

/**
 * # Safety
 * `session` must come from this library (or be NULL).
 */
void xbo_session_free(struct XboSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XBO_H */

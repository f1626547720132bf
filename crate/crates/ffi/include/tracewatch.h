/*
 * C interface to tracewatch.
 *
 * Every function returns a TwStatus; on anything but TW_STATUS_OK,
 * tw_last_error_message() describes the failure. Handles are opaque and
 * released with the matching *_free function. Strings returned through
 * `char **` out-parameters are owned by the caller and released with
 * tw_string_free.
 */

#ifndef TRACEWATCH_H
#define TRACEWATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TwStatus {
  TW_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  TW_STATUS_NULL_ARGUMENT = 1,
  /*
   A string argument was not valid UTF-8.
   */
  TW_STATUS_INVALID_UTF8 = 2,
  /*
   The specification did not parse or failed validation.
   */
  TW_STATUS_SPEC_ERROR = 3,
  /*
   A predicate is unknown, has the wrong arity, or a regex is bad.
   */
  TW_STATUS_COMPILE_ERROR = 4,
  /*
   The log text could not be ingested.
   */
  TW_STATUS_LOG_ERROR = 5,
  /*
   A predicate failed while checking.
   */
  TW_STATUS_MONITOR_ERROR = 6,
  /*
   Learning, diffing or model (de)serialization failed.
   */
  TW_STATUS_LEARN_ERROR = 7,
  /*
   An index argument was out of range.
   */
  TW_STATUS_OUT_OF_RANGE = 8,
  /*
   Rust code panicked; the handle arguments should be considered lost.
   */
  TW_STATUS_PANIC = 9,
} TwStatus;

/*
 A finalized event log.
 */
typedef struct TwLog TwLog;

/*
 A learned model of known-good runs.
 */
typedef struct TwModel TwModel;

/*
 Predicates usable by specifications.
 */
typedef struct TwRegistry TwRegistry;

/*
 The result of checking one log.
 */
typedef struct TwReport TwReport;

/*
 A parsed specification with its compiled automata.
 */
typedef struct TwSpec TwSpec;

/*
 Callback behind a user predicate. `args_json` is a JSON array: the
 field value first, then the arguments written in the specification.
 Store the verdict in `*result` and return 0, or return nonzero to
 signal a failure, which aborts the check with `TW_STATUS_MONITOR_ERROR`.
 */
typedef int (*TwPredicateFn)(const char *args_json, void *user_data, bool *result);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread, or null if none.
 Valid until the next failing call on the same thread.
 */
const char *tw_last_error_message(void);

/*
 Releases a string returned by this library. Null is ignored.
 */
void tw_string_free(char *s);

/*
 A registry holding the built-in predicates.
 */
enum TwStatus tw_registry_new(struct TwRegistry **out);

/*
 Adds or replaces predicate `name`. `arity` counts the arguments written
 in the specification, not the field value. `user_data` is passed back
 to every call and must stay valid while the registry or any spec
 compiled with it is alive.
 */
enum TwStatus tw_registry_register(struct TwRegistry *registry,
                                   const char *name,
                                   uintptr_t arity,
                                   TwPredicateFn callback,
                                   void *user_data);

void tw_registry_free(struct TwRegistry *registry);

/*
 Parses and compiles `text`. A null `registry` means the built-ins.
 */
enum TwStatus tw_spec_parse(const char *text,
                            const struct TwRegistry *registry,
                            struct TwSpec **out);

void tw_spec_free(struct TwSpec *spec);

enum TwStatus tw_spec_pattern_count(const struct TwSpec *spec, uintptr_t *out);

/*
 Canonical text of the specification.
 */
enum TwStatus tw_spec_pretty(const struct TwSpec *spec, char **out);

/*
 Graphviz rendering of pattern number `index`.
 */
enum TwStatus tw_spec_to_dot(const struct TwSpec *spec, uintptr_t index, char **out);

/*
 Ingests JSON lines with the default configuration and finalizes them.
 */
enum TwStatus tw_log_from_jsonl(const char *text, const char *source_id, struct TwLog **out);

/*
 Number of events, boundary markers included.
 */
enum TwStatus tw_log_len(const struct TwLog *log, uintptr_t *out);

/*
 Canonical JSON-lines form of the log.
 */
enum TwStatus tw_log_to_jsonl(const struct TwLog *log, char **out);

void tw_log_free(struct TwLog *log);

enum TwStatus tw_check(const struct TwSpec *spec, const struct TwLog *log, struct TwReport **out);

enum TwStatus tw_report_passed(const struct TwReport *report, bool *out);

enum TwStatus tw_report_violation_count(const struct TwReport *report, uintptr_t *out);

/*
 JSON form of the report, listing at most `max_violations` violations
 (0 lists all).
 */
enum TwStatus tw_report_to_json(const struct TwReport *report,
                                uintptr_t max_violations,
                                char **out);

void tw_report_free(struct TwReport *report);

/*
 Learns a model from `count` logs. A null `equality_json` compares
 events on kind alone.
 */
enum TwStatus tw_model_learn(const struct TwLog *const *logs,
                             uintptr_t count,
                             const char *equality_json,
                             struct TwModel **out);

/*
 Marks the model endorsed.
 */
enum TwStatus tw_model_endorse(struct TwModel *model);

/*
 Compares `log` with the model. `matched` receives the verdict; `text`,
 if not null, receives the human-readable diff.
 */
enum TwStatus tw_model_diff(const struct TwModel *model,
                            const struct TwLog *log,
                            bool *matched,
                            char **text_out);

enum TwStatus tw_model_to_json(const struct TwModel *model, char **out);

enum TwStatus tw_model_from_json(const char *json, struct TwModel **out);

void tw_model_free(struct TwModel *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TRACEWATCH_H */

#ifndef CBROWSE_H
#define CBROWSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_ARGUMENT = 1,
  CB_STATUS_INVALID_UTF8 = 2,
  CB_STATUS_IO = 3,
  CB_STATUS_INVALID_INPUT = 4,
  CB_STATUS_NOT_FOUND = 5,
  CB_STATUS_PANIC = 6,
} CbStatus;

typedef enum CbArm {
  CB_ARM_BASELINE = 0,
  CB_ARM_SIMILARITY = 1,
  CB_ARM_SESSION_CONTEXT = 2,
} CbArm;

/**
 * Opaque corpus index with its thesaurus and ranking configuration.
 */
typedef struct CbIndex CbIndex;

typedef struct CbMannWhitney {
  double u;
  double z;
  double p;
  double r;
} CbMannWhitney;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens a JSON-lines corpus. `thesaurus_path` may be null. Malformed
 * corpus lines are skipped; duplicate ids are an error.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum CbStatus cb_index_open(const char *corpus_path,
                            const char *thesaurus_path,
                            struct CbIndex **out);

/**
 * Builds an index from JSON-lines text held in memory.
 *
 * # Safety
 * `jsonl` must be NUL-terminated; `out` must be writable.
 */
enum CbStatus cb_index_from_jsonl(const char *jsonl, struct CbIndex **out);

/**
 * # Safety
 * `index` must come from this library and not be used afterwards.
 */
void cb_index_free(struct CbIndex *index);

/**
 * Number of documents, 0 for a null index.
 *
 * # Safety
 * `index` must be null or valid.
 */
size_t cb_index_doc_count(const struct CbIndex *index);

/**
 * `tf × idf` of `term` in `field` of one document. `field` is one of
 * `title`, `abstract`, `author`, `keyword`, `keyword_free`, `category`,
 * `journal`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum CbStatus cb_tf_idf(const struct CbIndex *index,
                        const char *term,
                        const char *field,
                        const char *doc_id,
                        double *out);

/**
 * Ranks a stratagem under `arm` and writes the ranked list as JSON.
 * `kind` is `keyword`, `author`, `category` or `journal`. `context_json`
 * is a session context object and may be null (empty context); it only
 * affects the session-context arm.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated; `out_json` writable.
 */
enum CbStatus cb_rank(const struct CbIndex *index,
                      enum CbArm arm,
                      const char *kind,
                      const char *value,
                      const char *seed_doc_id,
                      const char *context_json,
                      char **out_json);

/**
 * Evaluates a transaction log file and writes the metric report as JSON.
 * Malformed log lines are skipped.
 *
 * # Safety
 * `log_path` NUL-terminated; `out_json` writable.
 */
enum CbStatus cb_evaluate_log(const char *log_path, char **out_json);

/**
 * Two-sided Mann-Whitney U test of `a` against `b`.
 *
 * # Safety
 * `a` and `b` must hold `n_a` and `n_b` doubles; `out` writable.
 */
enum CbStatus cb_mann_whitney(const double *a,
                              size_t n_a,
                              const double *b,
                              size_t n_b,
                              struct CbMannWhitney *out);

/**
 * Deterministic arm for a session id under `seed`.
 *
 * # Safety
 * `session_id` NUL-terminated; `out` writable.
 */
enum CbStatus cb_assign_arm(const char *session_id, uint64_t seed, enum CbArm *out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void cb_string_free(char *s);

/**
 * Message of the last failed call on this thread, empty after a success.
 * Valid until the next library call on the same thread.
 */
const char *cb_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBROWSE_H */

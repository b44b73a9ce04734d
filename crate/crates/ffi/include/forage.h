#ifndef FORAGE_H
#define FORAGE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>

// Result codes. Zero is success.
typedef enum ForageStatus {
  FORAGE_STATUS_OK = 0,
  FORAGE_STATUS_NULL_ARGUMENT = 1,
  FORAGE_STATUS_INVALID_UTF8 = 2,
  FORAGE_STATUS_INVALID_ARGUMENT = 3,
  FORAGE_STATUS_NOT_FOUND = 4,
  FORAGE_STATUS_IO = 5,
  FORAGE_STATUS_PARSE = 6,
  FORAGE_STATUS_REPLAY = 7,
  FORAGE_STATUS_PANIC = 8,
} ForageStatus;

// Opaque handle to a document environment. Safe to share between threads.
typedef struct ForageEnv ForageEnv;

// Creates an empty document environment. Free it with
// [`forage_env_free`].
struct ForageEnv *forage_env_new(void);

// # Safety
// `env` is null or a handle from [`forage_env_new`] not yet freed.
void forage_env_free(struct ForageEnv *env);

// Registers a text file and writes its handle as JSON to `out`. The
// handle's `id` names the document in later calls.
//
// # Safety
// `env` is a live handle, `path` a NUL-terminated string and `out` valid
// for one pointer write.
enum ForageStatus forage_register(const struct ForageEnv *env, const char *path, char **out);

// Regex search over a registered document. `source` is a document id,
// path or file name. A `max_matches` of 0 keeps the default cap. Writes
// the match list as JSON.
//
// # Safety
// `env` is a live handle, `source` and `pattern` NUL-terminated strings and
// `out` valid for one pointer write.
enum ForageStatus forage_grep(const struct ForageEnv *env,
                              const char *source,
                              const char *pattern,
                              bool case_insensitive,
                              size_t context,
                              size_t max_matches,
                              char **out);

// Anchors of every line matching `pattern`, as a JSON array of strings.
//
// # Safety
// As for [`forage_grep`].
enum ForageStatus forage_scan(const struct ForageEnv *env,
                              const char *source,
                              const char *pattern,
                              char **out);

// Reads the lines under an anchor such as `notes.txt:10-20`. The document
// part may be an id, path or file name. A `limit` of 0 reads the whole
// span. Writes the observation as JSON.
//
// # Safety
// `env` is a live handle, `anchor` a NUL-terminated string and `out` valid
// for one pointer write.
enum ForageStatus forage_read(const struct ForageEnv *env,
                              const char *anchor,
                              size_t limit,
                              char **out);

// Counts tokens in `text`. `tokenizer` names the tokenizer or is null for
// the default.
//
// # Safety
// `env` is a live handle, `text_ptr` a NUL-terminated string, `tokenizer`
// null or a NUL-terminated string and `out` valid for one write.
enum ForageStatus forage_count_tokens(const struct ForageEnv *env,
                                      const char *text_ptr,
                                      const char *tokenizer,
                                      size_t *out);

// Accuracy points per thousand tokens.
//
// # Safety
// `out` is valid for one write.
enum ForageStatus forage_token_efficiency(double accuracy_percent, double mean_cost_k, double *out);

// Checks a JSONL trajectory against the state mutation rules. Writes
// `{"steps_checked": n, "violations": [...]}`.
//
// # Safety
// `trajectory` is a NUL-terminated string and `out` valid for one pointer
// write.
enum ForageStatus forage_audit(const char *trajectory, char **out);

// Re-executes a JSONL trajectory offline against its document and reports
// whether it reproduces. `doc_root` is null or a directory for a relative
// document path.
//
// # Safety
// `env` is a live handle, `trajectory` a NUL-terminated string, `doc_root`
// null or a NUL-terminated string and `out` valid for one pointer write.
enum ForageStatus forage_replay(const struct ForageEnv *env,
                                const char *trajectory,
                                const char *doc_root,
                                char **out);

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *forage_last_error(void);

// Releases a string returned through an `out` parameter.
//
// # Safety
// `s` is null or a string from this library not yet freed.
void forage_string_free(char *s);

#endif  /* FORAGE_H */

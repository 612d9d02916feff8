#ifndef JUICE_H
#define JUICE_H

/* Generated by cbindgen from juice-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status code returned by fallible entry points.
 */
typedef enum JuiceStatus {
  JUICE_STATUS_OK = 0,
  /*
   Invalid input: bad paths, malformed files, inadmissible settings.
   */
  JUICE_STATUS_USER_ERROR = 1,
  /*
   An internal invariant failed; report as a bug.
   */
  JUICE_STATUS_INTERNAL_ERROR = 2,
  /*
   A required pointer argument was null.
   */
  JUICE_STATUS_NULL_ARGUMENT = 3,
  /*
   A string argument was not valid UTF-8.
   */
  JUICE_STATUS_INVALID_UTF8 = 4,
} JuiceStatus;

/*
 An opened database: schema plus loaded tables.
 */
typedef struct JuiceDb JuiceDb;

/*
 Verification outcome for the weighted-vs-parameter-free encoder check.
 */
typedef struct JuiceVerifyReport {
  size_t trials;
  size_t passes;
  double max_rel_err;
} JuiceVerifyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread. Borrowed pointer,
 valid until the next call into this library from the same thread; never
 null (empty string when no error has occurred).
 */
const char *juice_last_error(void);

/*
 Library version as a static string; never freed by the caller.
 */
const char *juice_version(void);

/*
 Open a database from a schema JSON file and a directory of per-table
 CSV files. Returns null on failure; consult `juice_last_error`.

 # Safety
 `schema_path` and `data_dir` must be valid NUL-terminated strings.
 */
struct JuiceDb *juice_db_open(const char *schema_path, const char *data_dir);

/*
 Release a database handle. Null is a no-op.

 # Safety
 `db` must have come from `juice_db_open` and not been freed before.
 */
void juice_db_free(struct JuiceDb *db);

/*
 Number of tables in the schema, or -1 on a null handle.

 # Safety
 `db` must be a live handle from `juice_db_open`.
 */
int64_t juice_db_table_count(const struct JuiceDb *db);

/*
 Row count of a table by name, or -1 when the table does not exist.

 # Safety
 `db` must be a live handle; `table` a valid NUL-terminated string.
 */
int64_t juice_db_row_count(const struct JuiceDb *db, const char *table);

/*
 Number of feature columns the default configuration yields at the given
 meta-path length, or -1 on failure.

 # Safety
 `db` must be a live handle.
 */
int64_t juice_plan_feature_count(const struct JuiceDb *db, size_t hops);

/*
 Render the compiled plan as indented text. Caller frees the result with
 `juice_string_free`; null on failure.

 # Safety
 `db` must be a live handle.
 */
char *juice_explain_plan(const struct JuiceDb *db, size_t hops);

/*
 Compute the full feature matrix for every target row and return it as
 CSV text (header row of canonical feature names first). Caller frees the
 result with `juice_string_free`; null on failure.

 # Safety
 `db` must be a live handle.
 */
char *juice_encode(const struct JuiceDb *db, size_t hops);

/*
 Run randomized weighted-vs-parameter-free encoder trials and fill `out`.
 Returns `Ok` even when trials fail; inspect `passes` against `trials`.

 # Safety
 `out` must point to writable memory for one report.
 */
enum JuiceStatus juice_verify(size_t trials, uint64_t seed, struct JuiceVerifyReport *out);

/*
 Release a string returned by this library. Null is a no-op.

 # Safety
 `s` must have come from this library and not been freed before.
 */
void juice_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* JUICE_H */

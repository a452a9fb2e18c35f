#ifndef PLEDGER_H
#define PLEDGER_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum PledgerStatus {
  PLEDGER_STATUS_OK = 0,
  PLEDGER_STATUS_NULL_ARGUMENT = 1,
  PLEDGER_STATUS_INVALID_UTF8 = 2,
  /**
   * A document, identifier, timestamp or query did not parse.
   */
  PLEDGER_STATUS_PARSE_ERROR = 3,
  /**
   * The entry was not admitted to the ledger.
   */
  PLEDGER_STATUS_REJECTED = 4,
  /**
   * The file could not be read, written or locked.
   */
  PLEDGER_STATUS_IO_ERROR = 5,
  /**
   * The ledger file holds a line that is not an entry.
   */
  PLEDGER_STATUS_CORRUPT = 6,
  /**
   * A bug in the library; the handle should not be reused.
   */
  PLEDGER_STATUS_PANIC = 7,
} PledgerStatus;

/**
 * Why a chain failed to verify.
 */
typedef enum PledgerChainFailure {
  PLEDGER_CHAIN_FAILURE_NONE = 0,
  PLEDGER_CHAIN_FAILURE_HASH_MISMATCH = 1,
  PLEDGER_CHAIN_FAILURE_PREV_HASH_MISMATCH = 2,
  PLEDGER_CHAIN_FAILURE_DUPLICATE_ID = 3,
  PLEDGER_CHAIN_FAILURE_ORDER_VIOLATION = 4,
} PledgerChainFailure;

/**
 * An open ledger holding the writer lock on its file.
 */
typedef struct PledgerLedger PledgerLedger;

/**
 * Outcome of chain verification.
 */
typedef struct PledgerChainVerdict {
  bool valid;
  /**
   * Index of the first failing entry, or -1 when valid.
   */
  int64_t first_broken_index;
  enum PledgerChainFailure failure;
} PledgerChainVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens (creating if absent) the ledger at `path` and takes its writer
 * lock. On success `*out` receives a handle to release with
 * `pledger_ledger_close`.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid pointer.
 */
enum PledgerStatus pledger_ledger_open(const char *path, struct PledgerLedger **out);

/**
 * Releases a handle and its lock. Null is ignored.
 *
 * # Safety
 * `ledger` is null or a handle from `pledger_ledger_open` not yet closed.
 */
void pledger_ledger_close(struct PledgerLedger *ledger);

/**
 * Number of entries in the ledger.
 *
 * # Safety
 * `ledger` is a live handle; `out` is a valid pointer.
 */
enum PledgerStatus pledger_ledger_len(const struct PledgerLedger *ledger, size_t *out);

/**
 * Head digest as `sha256:<hex>`, or null for an empty ledger.
 *
 * # Safety
 * `ledger` is a live handle; `out` is a valid pointer.
 */
enum PledgerStatus pledger_ledger_head(const struct PledgerLedger *ledger, char **out);

/**
 * Seals and appends one entry document. `*out_hash`, when `out_hash` is
 * not null, receives the new entry's hash.
 *
 * # Safety
 * `ledger` is a live handle; `entry_json` is a NUL-terminated string;
 * `out_hash` is null or a valid pointer.
 */
enum PledgerStatus pledger_ledger_append(struct PledgerLedger *ledger,
                                         const char *entry_json,
                                         char **out_hash);

/**
 * Verifies the hash chain of the ledger file at `path` without taking
 * the writer lock. A broken chain is reported through `*out`, not the
 * status.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid pointer.
 */
enum PledgerStatus pledger_verify_file(const char *path, struct PledgerChainVerdict *out);

/**
 * Verifies the entries held by an open ledger.
 *
 * # Safety
 * `ledger` is a live handle; `out` is a valid pointer.
 */
enum PledgerStatus pledger_ledger_verify(const struct PledgerLedger *ledger,
                                         struct PledgerChainVerdict *out);

/**
 * Runs a pattern query. `*out_json` receives
 * `{"columns":[...],"rows":[[...],...]}`.
 *
 * # Safety
 * `ledger` is a live handle; `query` is a NUL-terminated string;
 * `out_json` is a valid pointer.
 */
enum PledgerStatus pledger_ledger_query(const struct PledgerLedger *ledger,
                                        const char *query,
                                        char **out_json);

/**
 * Gate decision for `capability` on `artifact@version` inside
 * `boundary`. `now` is an RFC 3339 time, or null for the current time.
 * `*allowed` receives the decision; `*out_json`, when not null, the full
 * decision with reasons.
 *
 * # Safety
 * `ledger` is a live handle; string arguments are NUL-terminated (`now`
 * may be null); `allowed` is valid; `out_json` is null or valid.
 */
enum PledgerStatus pledger_ledger_gate_check(const struct PledgerLedger *ledger,
                                             const char *capability,
                                             const char *artifact,
                                             const char *version,
                                             const char *boundary,
                                             const char *now,
                                             bool *allowed,
                                             char **out_json);

/**
 * Content hash of an entry document chained onto `prev_hash` (null for
 * the first entry). Any integrity block in the document is ignored.
 *
 * # Safety
 * `entry_json` is NUL-terminated; `prev_hash` is null or NUL-terminated;
 * `out` is a valid pointer.
 */
enum PledgerStatus pledger_entry_hash(const char *entry_json, const char *prev_hash, char **out);

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread; do not free.
 */
const char *pledger_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` is null or a string from this library not yet freed.
 */
void pledger_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLEDGER_H */

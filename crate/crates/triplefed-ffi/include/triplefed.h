#ifndef TRIPLEFED_H
#define TRIPLEFED_H

/* Generated by cbindgen from triplefed-ffi; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible function.
typedef enum TfdStatus {
  // The call succeeded.
  TFD_STATUS_OK = 0,
  // A required pointer argument was null.
  TFD_STATUS_NULL_ARG = 1,
  // A string argument was not valid UTF-8.
  TFD_STATUS_UTF8 = 2,
  // The engine rejected the call; `tfd_last_error` has the message.
  TFD_STATUS_RUNTIME = 3,
} TfdStatus;

// Opaque engine handle: a master plus its worker threads, all inside
// the calling process.
typedef struct TfdEngine TfdEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free it.
const char *tfd_version(void);

// Message from the most recent failure on this thread, as a
// NUL-terminated string. Empty until something fails. The pointer stays
// valid until the next failing call on the same thread; do not free it.
const char *tfd_last_error(void);

// Releases a string previously returned through an out-param.
//
// # Safety
//
// `s` must be null (a no-op) or a pointer obtained from this library's
// out-params, freed at most once.
void tfd_string_free(char *s);

// Starts an engine with `n_workers` in-process workers and default
// settings, writing the handle to `out`.
//
// # Safety
//
// `out` must point to writable memory for one pointer. Release the
// handle with [`tfd_engine_free`].
enum TfdStatus tfd_engine_new(uint32_t n_workers, struct TfdEngine **out);

// Starts an engine from `key = value` configuration text (same keys as
// a config file). The transport setting is ignored: an engine is always
// in-process.
//
// # Safety
//
// `config_text` must be a NUL-terminated string; `out` must point to
// writable memory for one pointer. Release the handle with
// [`tfd_engine_free`].
enum TfdStatus tfd_engine_with_config(const char *config_text, struct TfdEngine **out);

// Stops the engine's workers and releases the handle. Null is a no-op.
//
// # Safety
//
// `engine` must be null or a handle from an engine constructor, freed
// at most once and with no other call on it in flight.
void tfd_engine_free(struct TfdEngine *engine);

// Bulk-loads whitespace-separated `s p o [.]` triple lines, spreading
// them round-robin across workers. Loading is only allowed before the
// first redistribution. Writes the number of distinct stored triples to
// `loaded` (pass null to skip).
//
// # Safety
//
// `engine` must be a live handle; `triples` must be a NUL-terminated
// string; `loaded` must be null or point to writable memory for a
// `uint64_t`.
enum TfdStatus tfd_engine_load(struct TfdEngine *engine, const char *triples, uint64_t *loaded);

// Like [`tfd_engine_load`], but places triple `i` on worker
// `assign[i]`. `assign_len` must equal the number of triples and every
// id must be below the worker count.
//
// # Safety
//
// As [`tfd_engine_load`]; additionally `assign` must point to
// `assign_len` readable `uint32_t` values.
enum TfdStatus tfd_engine_load_placed(struct TfdEngine *engine,
                                      const char *triples,
                                      const uint32_t *assign,
                                      size_t assign_len,
                                      uint64_t *loaded);

// Answers one query and writes the rendered result to `out_text`: the
// execution mode on the first line, then `true`/`false` for
// variable-free queries or a tab-separated header plus one line per
// row. Rows are distinct and sorted, so equal answers render
// identically.
//
// # Safety
//
// `engine` must be a live handle; `query` must be a NUL-terminated
// string; `out_text` must point to writable memory for one pointer.
// Free the written string with [`tfd_string_free`].
enum TfdStatus tfd_engine_query(struct TfdEngine *engine, const char *query, char **out_text);

// Applies an update batch (`+ s p o` inserts, `- s p o` deletes, one
// per line) and writes the number of applied operations to `applied`
// (pass null to skip).
//
// # Safety
//
// `engine` must be a live handle; `updates` must be a NUL-terminated
// string; `applied` must be null or point to writable memory for a
// `uint64_t`.
enum TfdStatus tfd_engine_update(struct TfdEngine *engine, const char *updates, uint64_t *applied);

// Writes the storage and traffic counters as readable text to
// `out_text`.
//
// # Safety
//
// `engine` must be a live handle; `out_text` must point to writable
// memory for one pointer. Free the written string with
// [`tfd_string_free`].
enum TfdStatus tfd_engine_metrics(struct TfdEngine *engine, char **out_text);

// Writes the current replica-to-main storage ratio to `out`.
//
// # Safety
//
// `engine` must be a live handle; `out` must point to writable memory
// for a `double`.
enum TfdStatus tfd_engine_replication_ratio(struct TfdEngine *engine, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TRIPLEFED_H */

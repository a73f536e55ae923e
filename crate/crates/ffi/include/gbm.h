#ifndef GBM_H
#define GBM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GbmStatus {
  GBM_STATUS_OK = 0,
  GBM_STATUS_NULL_ARGUMENT = 1,
  GBM_STATUS_INVALID_UTF8 = 2,
  GBM_STATUS_PARSE_ERROR = 3,
  GBM_STATUS_ENSEMBLE_ERROR = 4,
  GBM_STATUS_IO_ERROR = 5,
  GBM_STATUS_INVALID_ARGUMENT = 6,
  GBM_STATUS_VERIFY_FAILED = 7,
  GBM_STATUS_PANIC = 8,
} GbmStatus;

/**
 * A law ensemble that passed the conformance checks.
 */
typedef struct GbmEnsemble GbmEnsemble;

/**
 * A parsed and validated law.
 */
typedef struct GbmLaw GbmLaw;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gbm_last_error(void);

/**
 * Library version as a static string.
 */
const char *gbm_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void gbm_string_free(char *s);

/**
 * Parses and validates a standalone law.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum GbmStatus gbm_law_parse(const char *text, struct GbmLaw **out);

/**
 * Hex SHA-256 of the law's canonical text.
 *
 * # Safety
 * `law` must come from [`gbm_law_parse`]; `out` must be valid.
 */
enum GbmStatus gbm_law_hash_hex(const struct GbmLaw *law, char **out);

/**
 * The law's canonical text.
 *
 * # Safety
 * `law` must come from [`gbm_law_parse`]; `out` must be valid.
 */
enum GbmStatus gbm_law_canonical(const struct GbmLaw *law, char **out);

/**
 * # Safety
 * `law` must be null or come from [`gbm_law_parse`], not yet freed.
 */
void gbm_law_free(struct GbmLaw *law);

/**
 * Loads a manifest and builds its ensemble, running every conformance check.
 *
 * # Safety
 * `manifest_path` must be a nul-terminated string and `out` valid.
 */
enum GbmStatus gbm_ensemble_load(const char *manifest_path, struct GbmEnsemble **out);

/**
 * Number of laws in the ensemble; 0 for null.
 *
 * # Safety
 * `ens` must be null or come from [`gbm_ensemble_load`].
 */
size_t gbm_ensemble_len(const struct GbmEnsemble *ens);

/**
 * Number of non-fatal conformance warnings; 0 for null.
 *
 * # Safety
 * `ens` must be null or come from [`gbm_ensemble_load`].
 */
size_t gbm_ensemble_warnings(const struct GbmEnsemble *ens);

/**
 * Hex hash of the ensemble's root law.
 *
 * # Safety
 * `ens` must come from [`gbm_ensemble_load`]; `out` must be valid.
 */
enum GbmStatus gbm_ensemble_root_hash_hex(const struct GbmEnsemble *ens, char **out);

/**
 * # Safety
 * `ens` must be null or come from [`gbm_ensemble_load`], not yet freed.
 */
void gbm_ensemble_free(struct GbmEnsemble *ens);

/**
 * Runs the supermarket scenario and returns the trace's hex SHA-256.
 * `config_json` and `script_json` may be null for the demo configuration
 * and an empty script.
 *
 * # Safety
 * String arguments must be null or nul-terminated; `digest_out` must be valid.
 */
enum GbmStatus gbm_acme_run(const char *config_json,
                            uint64_t seed,
                            double until,
                            const char *script_json,
                            char **digest_out);

/**
 * Runs the scenario and checks its trace; writes the verdict as JSON.
 * Returns `VerifyFailed` (with the verdict still written) when the trace
 * does not pass.
 *
 * # Safety
 * As for [`gbm_acme_run`].
 */
enum GbmStatus gbm_acme_verify(const char *config_json,
                               uint64_t seed,
                               double until,
                               const char *script_json,
                               char **verdict_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GBM_H */

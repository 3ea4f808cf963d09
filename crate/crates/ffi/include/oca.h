#ifndef OCA_H
#define OCA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum OcaStatus {
  OCA_STATUS_OK = 0,
  OCA_STATUS_NULL_POINTER = 1,
  OCA_STATUS_INVALID_ARGUMENT = 2,
  OCA_STATUS_IO = 3,
  OCA_STATUS_FORMAT = 4,
  OCA_STATUS_LABELS = 5,
  OCA_STATUS_SCORE = 6,
  OCA_STATUS_PANIC = 7,
} OcaStatus;

/**
 * Scoring methods, in the order the CLI reports them. Functions take the
 * numeric value as `uint32_t`; anything else is rejected.
 */
typedef enum OcaMethod {
  OCA_METHOD_NEG_MAX_PROB = 0,
  OCA_METHOD_SUM_OUT_PROB = 1,
  OCA_METHOD_MAX_OUT_PROB = 2,
  OCA_METHOD_NEG_MAX_IN_PROB = 3,
  OCA_METHOD_MAX_LOGIT_DIFF = 4,
} OcaMethod;

/**
 * Class embeddings of a label set, ready to score image embeddings.
 */
typedef struct OcaScorer OcaScorer;

/**
 * An embedding store loaded from an OCEB file.
 */
typedef struct OcaStore OcaStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *oca_last_error_message(void);

/**
 * Library version and supported OCEB format, as a static string.
 */
const char *oca_version(void);

/**
 * Loads an OCEB file and its sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum OcaStatus oca_store_load(const char *path, struct OcaStore **out);

/**
 * # Safety
 * `store` must be null or a handle from [`oca_store_load`] not yet freed.
 */
void oca_store_free(struct OcaStore *store);

/**
 * # Safety
 * `store` must be null or a live handle. Returns 0 for null.
 */
uintptr_t oca_store_dim(const struct OcaStore *store);

/**
 * # Safety
 * `store` must be null or a live handle. Returns 0 for null.
 */
uintptr_t oca_store_count(const struct OcaStore *store);

/**
 * Copies record `index` into `out`, which must hold `len == dim` floats.
 *
 * # Safety
 * `store` must be a live handle and `out` must point to `len` writable floats.
 */
enum OcaStatus oca_store_vector(const struct OcaStore *store,
                                uintptr_t index,
                                float *out,
                                uintptr_t len);

/**
 * Builds a scorer from a text-embedding store and a label-set JSON document.
 *
 * # Safety
 * `texts` must be a live store handle, `labels_json` a NUL-terminated
 * string and `out` a writable pointer.
 */
enum OcaStatus oca_scorer_new(const struct OcaStore *texts,
                              const char *labels_json,
                              struct OcaScorer **out);

/**
 * # Safety
 * `scorer` must be null or a handle from [`oca_scorer_new`] not yet freed.
 */
void oca_scorer_free(struct OcaScorer *scorer);

/**
 * Number of in-domain scoring classes. Returns 0 for null.
 *
 * # Safety
 * `scorer` must be null or a live handle.
 */
uintptr_t oca_scorer_n_in(const struct OcaScorer *scorer);

/**
 * Number of OOD scoring classes. Returns 0 for null.
 *
 * # Safety
 * `scorer` must be null or a live handle.
 */
uintptr_t oca_scorer_n_out(const struct OcaScorer *scorer);

/**
 * Scores one image embedding. The embedding is L2-normalized first.
 *
 * # Safety
 * `scorer` must be a live handle, `embedding` must point to `dim` floats and
 * `out` to one writable double.
 */
enum OcaStatus oca_scorer_score(const struct OcaScorer *scorer,
                                const float *embedding,
                                uintptr_t dim,
                                uint32_t method,
                                double temperature,
                                double *out);

/**
 * Scores a row of raw logits split into in-domain and OOD classes.
 *
 * # Safety
 * `in_logits` and `out_logits` must point to `n_in` and `n_out` doubles and
 * `out` to one writable double.
 */
enum OcaStatus oca_score(const double *in_logits,
                         uintptr_t n_in,
                         const double *out_logits,
                         uintptr_t n_out,
                         uint32_t method,
                         double temperature,
                         double *out);

/**
 * Both sides of the log decomposition of the in-domain maximum softmax
 * probability: `-ln(-neg_max_in_prob)` and `max_logit_diff + ln(1 + r)`.
 *
 * # Safety
 * Logit pointers must point to `n_in` and `n_out` doubles; `lhs` and `rhs`
 * to one writable double each.
 */
enum OcaStatus oca_identity_residual(const double *in_logits,
                                     uintptr_t n_in,
                                     const double *out_logits,
                                     uintptr_t n_out,
                                     double temperature,
                                     double *lhs,
                                     double *rhs);

/**
 * AUROC with `ood` as the positive class; ties count one half.
 *
 * # Safety
 * `ood` and `ind` must point to `n_ood` and `n_ind` doubles and `out` to one
 * writable double.
 */
enum OcaStatus oca_auroc(const double *ood,
                         uintptr_t n_ood,
                         const double *ind,
                         uintptr_t n_ind,
                         double *out);

/**
 * Spread `max - min` of per-box scores; needs at least two boxes.
 *
 * # Safety
 * `per_box` must point to `n` doubles and `out` to one writable double.
 */
enum OcaStatus oca_mixture_score(const double *per_box, uintptr_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCA_H */

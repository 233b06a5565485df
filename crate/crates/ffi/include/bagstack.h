#ifndef BAGSTACK_H
#define BAGSTACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BagstackStatus {
  BAGSTACK_STATUS_OK = 0,
  BAGSTACK_STATUS_NULL_POINTER = 1,
  BAGSTACK_STATUS_INVALID_UTF8 = 2,
  BAGSTACK_STATUS_INVALID_INPUT = 3,
  BAGSTACK_STATUS_IO = 4,
  BAGSTACK_STATUS_SHAPE = 5,
  BAGSTACK_STATUS_SELECTION = 6,
  BAGSTACK_STATUS_DIVERGED = 7,
  BAGSTACK_STATUS_PANIC = 8,
} BagstackStatus;

/**
 * A resolved ensemble selection with its provenance.
 */
typedef struct BagstackEnsemble BagstackEnsemble;

/**
 * A row-major documents x labels probability matrix.
 */
typedef struct BagstackMatrix BagstackMatrix;

/**
 * An opened snapshot store.
 */
typedef struct BagstackStore BagstackStore;

typedef struct BagstackMetrics {
  double hamming_loss;
  double instance_f1;
  double macro_f1;
  double micro_f1;
  double bce;
} BagstackMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bagstack_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bagstack_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BagstackStatus bagstack_store_open(const char *path, struct BagstackStore **out);

/**
 * # Safety
 * `store` must come from [`bagstack_store_open`] or be null.
 */
void bagstack_store_free(struct BagstackStore *store);

/**
 * Number of snapshots, validation documents and labels.
 *
 * # Safety
 * `store` must be a live handle; the out pointers must be writable or null.
 */
enum BagstackStatus bagstack_store_shape(const struct BagstackStore *store,
                                         size_t *n_snapshots,
                                         size_t *n_docs,
                                         size_t *n_labels);

/**
 * Builds an ensemble from TOML settings (the same keys as an ensemble
 * config file, e.g. `strategy = "bag-samples"` and `n = 3`). An empty
 * string selects the default meta-ensemble.
 *
 * # Safety
 * `store` must be a live handle, `config` a NUL-terminated string and `out`
 * writable.
 */
enum BagstackStatus bagstack_ensemble_build(const struct BagstackStore *store,
                                            const char *config,
                                            struct BagstackEnsemble **out);

/**
 * Rebuilds a recorded `ensemble.json` against `store`, failing if the store
 * no longer yields the recorded selection.
 *
 * # Safety
 * As for [`bagstack_ensemble_build`]; `json` is the recorded document.
 */
enum BagstackStatus bagstack_ensemble_from_json(const struct BagstackStore *store,
                                                const char *json,
                                                struct BagstackEnsemble **out);

/**
 * # Safety
 * `ensemble` must come from this library or be null.
 */
void bagstack_ensemble_free(struct BagstackEnsemble *ensemble);

/**
 * # Safety
 * `ensemble` must be a live handle and `n_members` writable.
 */
enum BagstackStatus bagstack_ensemble_len(const struct BagstackEnsemble *ensemble,
                                          size_t *n_members);

/**
 * The ensemble with its provenance as JSON; release with
 * [`bagstack_string_free`].
 *
 * # Safety
 * `ensemble` must be a live handle and `out` writable.
 */
enum BagstackStatus bagstack_ensemble_to_json(const struct BagstackEnsemble *ensemble, char **out);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void bagstack_string_free(char *s);

/**
 * Mean of the members' validation predictions.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum BagstackStatus bagstack_ensemble_aggregate(const struct BagstackEnsemble *ensemble,
                                                const struct BagstackStore *store,
                                                struct BagstackMatrix **out);

/**
 * Scores the ensemble against the store's validation truth.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum BagstackStatus bagstack_ensemble_evaluate(const struct BagstackEnsemble *ensemble,
                                               const struct BagstackStore *store,
                                               struct BagstackMetrics *out);

/**
 * # Safety
 * `m` must be a live handle; the out pointers must be writable or null.
 */
enum BagstackStatus bagstack_matrix_shape(const struct BagstackMatrix *m,
                                          size_t *n_docs,
                                          size_t *n_labels);

/**
 * Row-major values, valid until the matrix is freed. Null if `m` is null.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
const double *bagstack_matrix_data(const struct BagstackMatrix *m);

/**
 * # Safety
 * `m` must come from this library or be null.
 */
void bagstack_matrix_free(struct BagstackMatrix *m);

/**
 * Scores a row-major probability matrix against 0/1 truth at `threshold`.
 * Probabilities must lie in (0, 1).
 *
 * # Safety
 * `probs` and `truth` must each hold `n_docs * n_labels` values; `out`
 * must be writable.
 */
enum BagstackStatus bagstack_metrics_compute(const double *probs,
                                             const uint8_t *truth,
                                             size_t n_docs,
                                             size_t n_labels,
                                             double threshold,
                                             struct BagstackMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAGSTACK_H */

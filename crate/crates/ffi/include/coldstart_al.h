#ifndef COLDSTART_AL_H
#define COLDSTART_AL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum CalStatus {
  CAL_STATUS_OK = 0,
  CAL_STATUS_NULL_POINTER = 1,
  CAL_STATUS_INVALID_UTF8 = 2,
  CAL_STATUS_INVALID_ARGUMENT = 3,
  CAL_STATUS_IO = 4,
  CAL_STATUS_PARSE = 5,
  CAL_STATUS_BUFFER_TOO_SMALL = 6,
  CAL_STATUS_DIMENSION_MISMATCH = 7,
  CAL_STATUS_PANIC = 8,
  CAL_STATUS_INTERNAL = 9,
} CalStatus;

/**
 * Dataset file format for [`cal_corpus_load`].
 */
typedef enum CalFormat {
  /**
   * Guess from the file extension.
   */
  CAL_FORMAT_AUTO = 0,
  CAL_FORMAT_JSONL = 1,
  CAL_FORMAT_TSV = 2,
} CalFormat;

/**
 * k-means seeding for [`cal_sampler_select`].
 */
typedef enum CalInit {
  CAL_INIT_K_MEANS_PLUS_PLUS = 0,
  CAL_INIT_RANDOM = 1,
} CalInit;

/**
 * A tokenized corpus.
 */
typedef struct CalCorpus CalCorpus;

/**
 * Per-token NLLs for every sentence of a corpus plus the token fraction.
 */
typedef struct CalSampler CalSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *cal_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *cal_version(void);

/**
 * Load and tokenize a dataset. `max_len` 0 selects the default of 128.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum CalStatus cal_corpus_load(const char *path,
                               enum CalFormat format,
                               size_t max_len,
                               size_t min_count,
                               struct CalCorpus **out);

/**
 * Number of sentences, or 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle from [`cal_corpus_load`].
 */
size_t cal_corpus_len(const struct CalCorpus *corpus);

/**
 * Id of sentence `idx`, or null when out of range. The string lives as
 * long as the handle.
 *
 * # Safety
 * `corpus` must be null or a live handle from [`cal_corpus_load`].
 */
const char *cal_corpus_id(const struct CalCorpus *corpus, size_t idx);

/**
 * # Safety
 * `corpus` must be null or a handle from [`cal_corpus_load`] not yet freed.
 */
void cal_corpus_free(struct CalCorpus *corpus);

/**
 * Build a sampler from a bidirectional n-gram model trained on the whole
 * corpus. `order` 0 and nonpositive `alpha` select the defaults; a
 * `lambda` outside [0, 1] is rejected.
 *
 * # Safety
 * `corpus` must be a live handle and `out` a valid pointer.
 */
enum CalStatus cal_sampler_new_ngram(const struct CalCorpus *corpus,
                                     size_t order,
                                     double alpha,
                                     double lambda,
                                     double token_fraction,
                                     struct CalSampler **out);

/**
 * Build a sampler from an NLL JSONL file covering every sentence.
 *
 * # Safety
 * `corpus` must be a live handle, `nll_path` a nul-terminated string and
 * `out` a valid pointer.
 */
enum CalStatus cal_sampler_new_from_nll(const struct CalCorpus *corpus,
                                        const char *nll_path,
                                        double token_fraction,
                                        struct CalSampler **out);

/**
 * Select `k` sentences from the candidates (all sentences when
 * `candidates` is null) by clustering surprisal embeddings. Writes `k`
 * corpus indices, or every candidate when fewer than `k` remain, and
 * stores the count in `written`. `out` must hold at least `k` entries.
 *
 * # Safety
 * `sampler` must be a live handle; `candidates` null or `n_candidates`
 * readable entries; `out` `out_cap` writable entries; `written` valid.
 */
enum CalStatus cal_sampler_select(const struct CalSampler *sampler,
                                  const size_t *candidates,
                                  size_t n_candidates,
                                  size_t k,
                                  uint64_t seed,
                                  enum CalInit init,
                                  size_t *out,
                                  size_t out_cap,
                                  size_t *written);

/**
 * # Safety
 * `sampler` must be null or a handle not yet freed.
 */
void cal_sampler_free(struct CalSampler *sampler);

/**
 * Last-layer gradient embedding for the predicted label. `out` receives
 * `n_classes * hidden_dim` values; `predicted` may be null.
 *
 * # Safety
 * Pointers must reference the stated number of elements.
 */
enum CalStatus cal_gradient_embedding(const double *confidences,
                                      size_t n_classes,
                                      const double *hidden,
                                      size_t hidden_dim,
                                      double *out,
                                      size_t out_len,
                                      size_t *predicted);

/**
 * Shannon entropy in nats of a probability vector.
 *
 * # Safety
 * `proba` must reference `n` readable values and `out` be valid.
 */
enum CalStatus cal_predictive_entropy(const double *proba, size_t n, double *out);

/**
 * Mean silhouette of `n` row-major points of dimension `dim`.
 *
 * # Safety
 * `points` must reference `n * dim` values, `assignment` `n` values, and
 * `out` be valid.
 */
enum CalStatus cal_silhouette(const double *points,
                              size_t n,
                              size_t dim,
                              const size_t *assignment,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COLDSTART_AL_H */

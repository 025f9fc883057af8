/* C interface to the cyclerep periodic-sequence representation learning pipeline. */

#ifndef CYCLEREP_H
#define CYCLEREP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define CYCLEREP_STATUS_OK 0

#define CYCLEREP_STATUS_CONFIG 1

#define CYCLEREP_STATUS_MISSING_ARTIFACT 2

#define CYCLEREP_STATUS_NUMERIC 3

#define CYCLEREP_STATUS_INVALID_ARGUMENT 4

/**
 * Generated + encoded benchmark data for one run seed.
 */
typedef struct CyclerepBench CyclerepBench;

/**
 * Experiment configuration handle.
 */
typedef struct CyclerepConfig CyclerepConfig;

/**
 * Per-frame embeddings of a set of sequences.
 */
typedef struct CyclerepEmbeddings CyclerepEmbeddings;

/**
 * Trained (or loaded) projection head.
 */
typedef struct CyclerepHead CyclerepHead;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error raised on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cyclerep_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *cyclerep_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a `cyclerep_*` function documented to
 * transfer string ownership, and must not have been freed already.
 */
void cyclerep_string_free(char *s);

/**
 * Build a config from a JSON document; NULL or empty uses the defaults.
 * Returns NULL on error.
 *
 * # Safety
 * `json`, when non-NULL, must point to a NUL-terminated string.
 */
struct CyclerepConfig *cyclerep_config_new(const char *json);

/**
 * Apply one `path.to.key=value` override, as on the CLI.
 *
 * # Safety
 * `cfg` must be a live handle from `cyclerep_config_new`; `assignment`
 * must be a NUL-terminated string.
 */
int32_t cyclerep_config_set(struct CyclerepConfig *cfg, const char *assignment);

/**
 * Serialize the effective config to JSON. Caller frees the string.
 *
 * # Safety
 * `cfg` must be a live handle from `cyclerep_config_new`.
 */
char *cyclerep_config_to_json(const struct CyclerepConfig *cfg);

/**
 * # Safety
 * `cfg` must come from `cyclerep_config_new` and not be freed twice.
 */
void cyclerep_config_free(struct CyclerepConfig *cfg);

/**
 * k-NN evaluation; `source` 0 = trained embeddings, 1 = frozen-encoder
 * baseline, 2 = random baseline.
 *
 * # Safety
 * `cfg` must be a live handle from `cyclerep_config_new`.
 */
int32_t cyclerep_cmd_eval(const struct CyclerepConfig *cfg, int32_t source);

/**
 * Generate and encode the benchmark for one run seed, in memory.
 * Returns NULL on error.
 *
 * # Safety
 * `cfg` must be a live handle from `cyclerep_config_new`.
 */
struct CyclerepBench *cyclerep_bench_prepare(const struct CyclerepConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `bench` must come from `cyclerep_bench_prepare` and not be freed twice.
 */
void cyclerep_bench_free(struct CyclerepBench *bench);

/**
 * Train a head on the bench's train split. Returns NULL on error.
 *
 * # Safety
 * `cfg` and `bench` must be live handles.
 */
struct CyclerepHead *cyclerep_train(const struct CyclerepConfig *cfg,
                                    const struct CyclerepBench *bench);

/**
 * Persist a head as a checkpoint file.
 *
 * # Safety
 * `head` must be a live handle; `path` a NUL-terminated string.
 */
int32_t cyclerep_head_save(const struct CyclerepHead *head, const char *path);

/**
 * Load a checkpoint file into a head handle. Returns NULL on error.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct CyclerepHead *cyclerep_head_load(const char *path);

/**
 * # Safety
 * `head` must come from `cyclerep_train`/`cyclerep_head_load` and not
 * be freed twice.
 */
void cyclerep_head_free(struct CyclerepHead *head);

/**
 * Embed the bench's test split with a trained head. Returns NULL on error.
 *
 * # Safety
 * All handles must be live.
 */
struct CyclerepEmbeddings *cyclerep_embed_test(const struct CyclerepBench *bench,
                                               const struct CyclerepHead *head);

/**
 * Number of embedded sequences, or -1 on a NULL handle.
 *
 * # Safety
 * `embs` must be a live handle.
 */
int64_t cyclerep_embeddings_count(const struct CyclerepEmbeddings *embs);

/**
 * Frame count of sequence `index`, or -1 when out of range.
 *
 * # Safety
 * `embs` must be a live handle.
 */
int64_t cyclerep_embeddings_frames(const struct CyclerepEmbeddings *embs, uintptr_t index);

/**
 * Embedding dimensionality, or -1 on a NULL/empty handle.
 *
 * # Safety
 * `embs` must be a live handle.
 */
int64_t cyclerep_embeddings_dim(const struct CyclerepEmbeddings *embs);

/**
 * Copy the embedding of `(sequence, frame)` into `out` (length `dim`).
 *
 * # Safety
 * `embs` must be a live handle and `out` must point to at least
 * `cyclerep_embeddings_dim()` writable doubles.
 */
int32_t cyclerep_embeddings_copy_row(const struct CyclerepEmbeddings *embs,
                                     uintptr_t sequence,
                                     uintptr_t frame,
                                     double *out);

/**
 * # Safety
 * `embs` must come from `cyclerep_embed_test` and not be freed twice.
 */
void cyclerep_embeddings_free(struct CyclerepEmbeddings *embs);

/**
 * Weighted k-NN metrics of the given embeddings against the bench's
 * test labels, returned as a JSON string (caller frees). NULL on error.
 *
 * # Safety
 * All handles must be live.
 */
char *cyclerep_eval_json(const struct CyclerepConfig *cfg,
                         const struct CyclerepBench *bench,
                         const struct CyclerepEmbeddings *embs);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CYCLEREP_H */

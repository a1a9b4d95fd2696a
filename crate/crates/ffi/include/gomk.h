#ifndef GOMK_H
#define GOMK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GomkStatus {
  GOMK_STATUS_OK = 0,
  GOMK_STATUS_NULL_POINTER = 1,
  GOMK_STATUS_INVALID_UTF8 = 2,
  GOMK_STATUS_CONFIG = 3,
  GOMK_STATUS_SHAPE = 4,
  GOMK_STATUS_INDEX = 5,
  GOMK_STATUS_INVARIANT = 6,
  GOMK_STATUS_DATA = 7,
  GOMK_STATUS_IO = 8,
  GOMK_STATUS_PARSE = 9,
  GOMK_STATUS_TRAINING = 10,
  /**
   * The output buffer is too small; the required length was written.
   */
  GOMK_STATUS_BUFFER_TOO_SMALL = 11,
  GOMK_STATUS_PANIC = 12,
} GomkStatus;

typedef enum GomkMatcher {
  GOMK_MATCHER_GREEDY = 0,
  GOMK_MATCHER_EXACT = 1,
} GomkMatcher;

typedef enum GomkBoxMode {
  GOMK_BOX_MODE_CLAMP = 0,
  GOMK_BOX_MODE_LOGISTIC = 1,
} GomkBoxMode;

/**
 * Opaque trainable filter handle.
 */
typedef struct GomkFilter GomkFilter;

/**
 * Opaque graph handle.
 */
typedef struct GomkGraph GomkGraph;

/**
 * One matched pair of node indices and its similarity.
 */
typedef struct GomkPair {
  size_t x;
  size_t y;
  double similarity;
} GomkPair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or null if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gomk_last_error(void);

void gomk_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gomk_version(void);

/**
 * Maximum kernel value `m (t + 1)` for graphs standardized to `m` nodes.
 */
double gomk_self_kernel(size_t m, size_t t);

/**
 * Builds a graph from an `n × n` symmetric adjacency with weights in
 * `[0, 1]` and zero diagonal, and an `n × dim` feature matrix.
 *
 * # Safety
 * `adjacency` must point to `n * n` doubles and `features` to `n * dim`
 * doubles; `out` must be writable.
 */
enum GomkStatus gomk_graph_new(size_t n,
                               size_t dim,
                               const double *adjacency,
                               const double *features,
                               struct GomkGraph **out);

/**
 * Builds a binary graph from `edge_count` pairs stored as `[u0, v0, u1, v1, ...]`.
 *
 * # Safety
 * `edges` must point to `2 * edge_count` values, `features` to `n * dim`
 * doubles; `out` must be writable.
 */
enum GomkStatus gomk_graph_from_edges(size_t n,
                                      const size_t *edges,
                                      size_t edge_count,
                                      size_t dim,
                                      const double *features,
                                      struct GomkGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from this library not yet freed.
 */
void gomk_graph_free(struct GomkGraph *graph);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t gomk_graph_nodes(const struct GomkGraph *graph);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t gomk_graph_dim(const struct GomkGraph *graph);

/**
 * Kernel value between two graphs, padding the smaller one with isolated
 * zero-feature nodes. The pair count always goes to `pair_count`; with
 * `pair_capacity == 0` the pairs are skipped (`pairs` may be null), else
 * they are copied to `pairs` or `BufferTooSmall` is returned.
 *
 * # Safety
 * `a`, `b` must be live handles; `kappa` and `pair_count` writable;
 * `pairs` must have room for `pair_capacity` entries.
 */
enum GomkStatus gomk_kernel(const struct GomkGraph *a,
                            const struct GomkGraph *b,
                            size_t t,
                            double tau,
                            enum GomkMatcher matcher,
                            double *kappa,
                            struct GomkPair *pairs,
                            size_t pair_capacity,
                            size_t *pair_count);

/**
 * Random filter: adjacency weights in `[0.3, 0.7)`, features in `[0, 1)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GomkStatus gomk_filter_random(size_t nodes,
                                   size_t dim,
                                   uint64_t seed,
                                   struct GomkFilter **out);

/**
 * Filter initialized from a graph's adjacency and features.
 *
 * # Safety
 * `graph` must be a live handle and `out` writable.
 */
enum GomkStatus gomk_filter_from_graph(const struct GomkGraph *graph, struct GomkFilter **out);

/**
 * # Safety
 * `filter` must be null or a handle from this library not yet freed.
 */
void gomk_filter_free(struct GomkFilter *filter);

/**
 * # Safety
 * `filter` must be null or a live handle.
 */
size_t gomk_filter_nodes(const struct GomkFilter *filter);

/**
 * # Safety
 * `filter` must be null or a live handle.
 */
size_t gomk_filter_dim(const struct GomkFilter *filter);

/**
 * Copies the dense `nodes × nodes` adjacency into `out`.
 *
 * # Safety
 * `filter` must be a live handle; `out` must hold `capacity` doubles.
 */
enum GomkStatus gomk_filter_adjacency(const struct GomkFilter *filter,
                                      double *out,
                                      size_t capacity);

/**
 * Copies the `nodes × dim` features into `out`.
 *
 * # Safety
 * `filter` must be a live handle; `out` must hold `capacity` doubles.
 */
enum GomkStatus gomk_filter_features(const struct GomkFilter *filter, double *out, size_t capacity);

/**
 * Trains `filter` in place to maximize its kernel value with `target`
 * (same node count) and writes the final value to `kappa`.
 *
 * # Safety
 * `target` and `filter` must be live handles; `kappa` writable.
 */
enum GomkStatus gomk_filter_fit(struct GomkFilter *filter,
                                const struct GomkGraph *target,
                                size_t t,
                                double tau,
                                size_t epochs,
                                double learning_rate,
                                enum GomkBoxMode box_mode,
                                double *kappa);

/**
 * Disentangled node representation: for every node `u` of `graph`, the
 * kernel values of its `hop_radius`-hop subgraph (standardized to the
 * filter size) against each filter. Writes `nodes × filter_count` values.
 *
 * # Safety
 * `graph` must be a live handle, `filters` an array of `filter_count` live
 * handles, and `out` must hold `capacity` doubles.
 */
enum GomkStatus gomk_node_responses(const struct GomkGraph *graph,
                                    const struct GomkFilter *const *filters,
                                    size_t filter_count,
                                    size_t hop_radius,
                                    size_t t,
                                    double tau,
                                    double *out,
                                    size_t capacity);

/**
 * Runs a named experiment (`iso-learn`, `mine-patterns`, `motif-classify`,
 * `node-classify`, `graph-classify`, `check`) with a JSON config (missing
 * keys take defaults). Artifacts go to `out_dir` when it is non-null. The
 * report is returned as a JSON string to release with
 * [`gomk_string_free`]; `passed` receives 1 when every gating check passed.
 *
 * # Safety
 * `name` and `config_json` must be NUL-terminated strings, `out_dir` null
 * or NUL-terminated, `report` and `passed` writable.
 */
enum GomkStatus gomk_run_experiment(const char *name,
                                    const char *config_json,
                                    const char *out_dir,
                                    char **report,
                                    int32_t *passed);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void gomk_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GOMK_H */

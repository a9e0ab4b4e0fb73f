#ifndef BIKEFLOW_H
#define BIKEFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Value reported for stations without a module.
 */
#define BF_UNASSIGNED -1

typedef enum BfFlowModel {
  BF_FLOW_MODEL_EMPIRICAL = 0,
  BF_FLOW_MODEL_RANDOM_WALK = 1,
} BfFlowModel;

/**
 * Status codes returned by every fallible function.
 */
typedef enum BfStatus {
  BF_STATUS_OK = 0,
  BF_STATUS_NULL_POINTER = 1,
  BF_STATUS_INVALID_ARGUMENT = 2,
  BF_STATUS_IO = 3,
  BF_STATUS_SCHEMA = 4,
  BF_STATUS_UNKNOWN_STATION = 5,
  BF_STATUS_NOT_CONVERGED = 6,
  BF_STATUS_INTERNAL = 7,
  BF_STATUS_PANIC = 8,
} BfStatus;

/**
 * Opaque directed trip network.
 */
typedef struct BfNetwork BfNetwork;

/**
 * Opaque detection result.
 */
typedef struct BfResult BfResult;

/**
 * Detection settings. Obtain defaults from [`bf_detect_options_default`].
 */
typedef struct BfDetectOptions {
  enum BfFlowModel flow_model;
  double tau;
  uint64_t seed;
  size_t trials;
  double resolution;
} BfDetectOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library from the same thread.
 */
const char *bf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bf_version(void);

struct BfDetectOptions bf_detect_options_default(void);

/**
 * Builds a network on nodes `0..node_count` from parallel arrays of
 * length `edge_count`. Parallel edges are summed.
 *
 * # Safety
 * Each array must hold `edge_count` readable elements (they may be null
 * when `edge_count` is 0) and `out` must be writable.
 */
enum BfStatus bf_network_from_edges(size_t node_count,
                                    const size_t *sources,
                                    const size_t *targets,
                                    const uint64_t *weights,
                                    size_t edge_count,
                                    struct BfNetwork **out);

/**
 * Reads an `origin_id,destination_id,weight` edge list. `stations_path`
 * may be null; otherwise its stations define the node universe.
 *
 * # Safety
 * Paths must be NUL-terminated strings and `out` must be writable.
 */
enum BfStatus bf_network_from_csv(const char *edges_path,
                                  const char *stations_path,
                                  struct BfNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from this library that is not yet freed.
 */
void bf_network_free(struct BfNetwork *net);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t bf_network_node_count(const struct BfNetwork *net);

/**
 * Total trip weight, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
uint64_t bf_network_total_weight(const struct BfNetwork *net);

/**
 * Station id of node `index`.
 *
 * # Safety
 * `net` must be a live handle and `out` writable.
 */
enum BfStatus bf_network_station_id(const struct BfNetwork *net, size_t index, int64_t *out);

/**
 * Map-equation community detection. `options` may be null for defaults.
 *
 * # Safety
 * `net` must be a live handle, `options` null or readable, `out` writable.
 */
enum BfStatus bf_infomap(const struct BfNetwork *net,
                         const struct BfDetectOptions *options,
                         struct BfResult **out);

/**
 * Louvain modularity maximization on the symmetrized network.
 *
 * # Safety
 * As for [`bf_infomap`].
 */
enum BfStatus bf_louvain(const struct BfNetwork *net,
                         const struct BfDetectOptions *options,
                         struct BfResult **out);

/**
 * Greedy agglomerative modularity maximization.
 *
 * # Safety
 * As for [`bf_infomap`].
 */
enum BfStatus bf_greedy_modularity(const struct BfNetwork *net,
                                   const struct BfDetectOptions *options,
                                   struct BfResult **out);

/**
 * # Safety
 * `res` must be null or a handle from this library that is not yet freed.
 */
void bf_result_free(struct BfResult *res);

/**
 * # Safety
 * `res` must be null or a live handle.
 */
size_t bf_result_node_count(const struct BfResult *res);

/**
 * # Safety
 * `res` must be null or a live handle.
 */
size_t bf_result_module_count(const struct BfResult *res);

/**
 * The method's own objective: codelength in bits for infomap, modularity
 * for the other methods. NaN for a null handle.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
double bf_result_score(const struct BfResult *res);

/**
 * Map-equation codelength of the result's partition under the flow used
 * for detection. NaN if undefined or for a null handle.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
double bf_result_codelength(const struct BfResult *res);

/**
 * Copies module ids into `buf` (length `len`, at least the node count).
 * Unassigned nodes get [`BF_UNASSIGNED`].
 *
 * # Safety
 * `res` must be a live handle and `buf` must hold `len` writable elements.
 */
enum BfStatus bf_result_assignment(const struct BfResult *res, int64_t *buf, size_t len);

/**
 * Codelength in bits of a caller-supplied assignment (`BF_UNASSIGNED` or a
 * non-negative module id per node). `options` may be null for defaults.
 *
 * # Safety
 * `net` must be a live handle, `assignment` must hold `len` readable
 * elements, `options` null or readable and `out` writable.
 */
enum BfStatus bf_codelength(const struct BfNetwork *net,
                            const struct BfDetectOptions *options,
                            const int64_t *assignment,
                            size_t len,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIKEFLOW_H */

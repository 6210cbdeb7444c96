#ifndef MLPBENCH_H
#define MLPBENCH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Values 0 to 4 match the command-line exit
 * codes.
 */
typedef enum MlpStatus {
  MLP_STATUS_OK = 0,
  MLP_STATUS_OTHER = 1,
  MLP_STATUS_CONFIG = 2,
  MLP_STATUS_DIVERGENCE = 3,
  MLP_STATUS_COMPARISON = 4,
  MLP_STATUS_NULL_POINTER = 5,
  MLP_STATUS_SHAPE = 6,
  MLP_STATUS_DOMAIN = 7,
  MLP_STATUS_FORMAT = 8,
  MLP_STATUS_PANIC = 9,
} MlpStatus;

typedef enum MlpActivation {
  MLP_ACTIVATION_RELU = 0,
  MLP_ACTIVATION_SIGMOID = 1,
} MlpActivation;

typedef enum MlpLoss {
  MLP_LOSS_MSE = 0,
  MLP_LOSS_BCE = 1,
} MlpLoss;

typedef enum MlpStrategyKind {
  MLP_STRATEGY_KIND_SEQUENTIAL_ONLINE = 0,
  MLP_STRATEGY_KIND_BATCH_VECTORIZED = 1,
  MLP_STRATEGY_KIND_THREAD_MAP_REDUCE = 2,
  MLP_STRATEGY_KIND_THREAD_FULL_PIPELINE = 3,
} MlpStrategyKind;

/**
 * Opaque dataset handle.
 */
typedef struct MlpDataset MlpDataset;

/**
 * Opaque network handle: parameters plus the config they were built for.
 */
typedef struct MlpNetwork MlpNetwork;

/**
 * `batch_size` is read only for batch-vectorized, `threads` only for the
 * threaded kinds.
 */
typedef struct MlpStrategy {
  enum MlpStrategyKind kind;
  size_t batch_size;
  size_t threads;
} MlpStrategy;

typedef struct MlpPhaseTimings {
  uint64_t forward_ns;
  uint64_t backward_ns;
  uint64_t update_ns;
  uint64_t total_ns;
} MlpPhaseTimings;

typedef struct MlpKnee {
  /**
   * Nonzero when a sub-linear interval was found.
   */
  int32_t flagged;
  size_t lo;
  size_t hi;
  double boundary_estimate;
} MlpKnee;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mlp_last_error_message(void);

/**
 * Creates a network with freshly initialised parameters.
 *
 * # Safety
 * `widths` must point to `n_widths` values and `out` must be writable.
 */
enum MlpStatus mlp_network_new(const size_t *widths,
                               size_t n_widths,
                               enum MlpActivation activation,
                               enum MlpLoss loss,
                               double learning_rate,
                               uint64_t seed,
                               struct MlpNetwork **out);

/**
 * Loads parameters from an MLPW file; layer widths come from the file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must be writable.
 */
enum MlpStatus mlp_network_load(const char *path,
                                enum MlpActivation activation,
                                enum MlpLoss loss,
                                double learning_rate,
                                struct MlpNetwork **out);

/**
 * Releases a network. Null is ignored.
 *
 * # Safety
 * `net` must come from this library and not be used afterwards.
 */
void mlp_network_free(struct MlpNetwork *net);

/**
 * Number of weights and biases, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t mlp_network_num_params(const struct MlpNetwork *net);

/**
 * FNV-1a of the network's exported parameter bytes, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
uint64_t mlp_network_params_digest(const struct MlpNetwork *net);

/**
 * Runs a forward pass over `rows` samples stored row-major in `input`
 * (`rows * input_width` values) and writes `rows * output_width` values.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum MlpStatus mlp_network_forward(const struct MlpNetwork *net,
                                   const double *input,
                                   size_t rows,
                                   size_t cols,
                                   double *output,
                                   size_t output_len);

/**
 * Trains in place. `timings` and `final_loss` may be null. On failure the
 * network keeps its previous parameters.
 *
 * # Safety
 * Handles must be live; output pointers must be null or writable.
 */
enum MlpStatus mlp_network_train(struct MlpNetwork *net,
                                 const struct MlpDataset *data,
                                 struct MlpStrategy strategy,
                                 size_t epochs,
                                 struct MlpPhaseTimings *timings,
                                 double *final_loss);

/**
 * Writes the parameters as an MLPW file.
 *
 * # Safety
 * `net` must be live and `path` NUL-terminated.
 */
enum MlpStatus mlp_network_export_params(const struct MlpNetwork *net, const char *path);

/**
 * Synthetic dataset shaped for `net`: uniform inputs and targets from a
 * teacher network seeded from `data_seed`.
 *
 * # Safety
 * `net` must be live and `out` writable.
 */
enum MlpStatus mlp_dataset_new(const struct MlpNetwork *net,
                               size_t n_samples,
                               uint64_t data_seed,
                               struct MlpDataset **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t mlp_dataset_len(const struct MlpDataset *data);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `data` must come from this library and not be used afterwards.
 */
void mlp_dataset_free(struct MlpDataset *data);

/**
 * Overall speedup `1 / ((1 - p) + p / s)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MlpStatus mlp_amdahl_speedup(double p, double s, double *out);

/**
 * Parallel fraction that explains an observed speedup at factor `s`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MlpStatus mlp_estimate_parallel_fraction(double observed, double s, double *out);

/**
 * Knee detection over `n` (batch size, runtime) pairs.
 *
 * # Safety
 * `batch_sizes` and `runtimes` must hold `n` values; `out` must be writable.
 */
enum MlpStatus mlp_detect_knee(const size_t *batch_sizes,
                               const double *runtimes,
                               size_t n,
                               double threshold,
                               struct MlpKnee *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLPBENCH_H */

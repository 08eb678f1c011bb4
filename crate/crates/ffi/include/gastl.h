#ifndef GASTL_H
#define GASTL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GastlStatus {
  GASTL_STATUS_OK = 0,
  GASTL_STATUS_INVALID_CONFIG = 1,
  GASTL_STATUS_DATA_ERROR = 2,
  GASTL_STATUS_NUMERICAL = 3,
  GASTL_STATUS_NULL_POINTER = 4,
  GASTL_STATUS_PANIC = 5,
} GastlStatus;

/**
 * A loaded dataset (source, target train, target test).
 */
typedef struct GastlBundle GastlBundle;

/**
 * A fitted transfer model.
 */
typedef struct GastlModel GastlModel;

/**
 * Flat mirror of the transfer hyperparameters.
 */
typedef struct GastlHyperParams {
  size_t hidden_size;
  double mu;
  double lambda;
  double gamma;
  size_t knn;
  size_t max_outer;
  double outer_tol;
  double irls_epsilon;
  double irls_tol;
  size_t irls_max_iter;
  size_t lbfgs_max_iter;
  size_t lbfgs_memory;
  uint64_t seed;
} GastlHyperParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *gastl_last_error_message(void);

void gastl_string_free(char *s);

enum GastlStatus gastl_hyperparams_default(struct GastlHyperParams *out);

/**
 * Loads three CSV files. `label_column` may be null (defaults to `y`, or the
 * last column for files without a header).
 */
enum GastlStatus gastl_bundle_load_csv(const char *source,
                                       const char *target_train,
                                       const char *target_test,
                                       const char *label_column,
                                       struct GastlBundle **out);

enum GastlStatus gastl_bundle_synthetic(size_t d,
                                        size_t clusters,
                                        size_t n_src_per_cluster,
                                        size_t n_trg_per_class,
                                        size_t n_test_per_class,
                                        size_t relevant_clusters,
                                        double noise_sd,
                                        uint64_t seed,
                                        struct GastlBundle **out);

/**
 * Feature dimension and sample counts of a bundle. Any output may be null.
 */
enum GastlStatus gastl_bundle_dims(const struct GastlBundle *bundle,
                                   size_t *dim,
                                   size_t *n_src,
                                   size_t *n_trg,
                                   size_t *n_test);

void gastl_bundle_free(struct GastlBundle *bundle);

/**
 * Scales the bundle and fits the transfer model.
 */
enum GastlStatus gastl_transfer_fit(const struct GastlBundle *bundle,
                                    const struct GastlHyperParams *params,
                                    struct GastlModel **out);

void gastl_model_free(struct GastlModel *model);

/**
 * Writes the `n_src` source relevance weights. `len` must equal `n_src`.
 */
enum GastlStatus gastl_model_source_weights(const struct GastlModel *model,
                                            double *out,
                                            size_t len);

/**
 * Copies up to `capacity` trace values into `out` (may be null when
 * `capacity` is 0) and stores the full trace length in `len`.
 */
enum GastlStatus gastl_model_objective_trace(const struct GastlModel *model,
                                             double *out,
                                             size_t capacity,
                                             size_t *len);

/**
 * Serialized model; free with [`gastl_string_free`].
 */
enum GastlStatus gastl_model_to_json(const struct GastlModel *model, char **out);

/**
 * Runs a full experiment from a JSON configuration and returns the JSON
 * report; free it with [`gastl_string_free`].
 */
enum GastlStatus gastl_run_experiment_json(const char *config_json, char **out);

/**
 * Sum of Euclidean row norms of a row-major `rows × cols` matrix.
 */
enum GastlStatus gastl_l21_norm(const double *data, size_t rows, size_t cols, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GASTL_H */

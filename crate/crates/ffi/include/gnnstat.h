#ifndef GNNSTAT_H
#define GNNSTAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  GNN_STATUS_OK = 0,
  GNN_STATUS_NULL_POINTER = 1,
  GNN_STATUS_INVALID_ARGUMENT = 2,
  GNN_STATUS_IO = 3,
  GNN_STATUS_PARSE = 4,
  GNN_STATUS_DIMENSION_MISMATCH = 5,
  GNN_STATUS_TRAINING_FAILED = 6,
  GNN_STATUS_CONFIG = 7,
  GNN_STATUS_INTERNAL = 8,
} GnnStatus;

/**
 * A loaded dataset with its normalized adjacency.
 */
typedef struct GnnDataset GnnDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *gnn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gnn_version(void);

/**
 * Loads a dataset directory (`meta.json`, `graph.tsv`, `features.tsv`,
 * `labels.tsv`).
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
GnnStatus gnn_dataset_load(const char *dir, GnnDataset **out);

/**
 * Generates a stochastic-block-model dataset with the default edge
 * probabilities and feature separation.
 *
 * # Safety
 * `out` must be a writable pointer.
 */
GnnStatus gnn_dataset_synthetic(size_t n_per_class,
                                size_t n_classes,
                                size_t feature_dim,
                                uint64_t seed,
                                GnnDataset **out);

/**
 * Writes a dataset in the directory layout read by [`gnn_dataset_load`].
 *
 * # Safety
 * `ds` must come from this library; `dir` must be NUL-terminated.
 */
GnnStatus gnn_dataset_save(const GnnDataset *ds, const char *dir);

/**
 * Releases a dataset. NULL is ignored.
 *
 * # Safety
 * `ds` must come from this library and not be used afterwards.
 */
void gnn_dataset_free(GnnDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or come from this library.
 */
size_t gnn_dataset_n_nodes(const GnnDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or come from this library.
 */
size_t gnn_dataset_n_features(const GnnDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or come from this library.
 */
size_t gnn_dataset_n_classes(const GnnDataset *ds);

/**
 * `Ã^k x` for an `n_nodes × cols` row-major `x`; `out` has the same shape
 * and may not alias `x`.
 *
 * # Safety
 * `x` and `out` must each hold `n_nodes * cols` doubles.
 */
GnnStatus gnn_propagate_power(const GnnDataset *ds,
                              const double *x,
                              size_t cols,
                              size_t k,
                              double *out);

/**
 * Personalized-PageRank propagation by fixed-point iteration. The final
 * update size is written to `residual` and whether it reached `tol` to
 * `converged` (either may be NULL).
 *
 * # Safety
 * `x` and `out` must each hold `n_nodes * cols` doubles.
 */
GnnStatus gnn_propagate_ppr(const GnnDataset *ds,
                            const double *x,
                            size_t cols,
                            double alpha,
                            size_t iters,
                            double tol,
                            double *out,
                            double *residual,
                            bool *converged);

/**
 * Trains one model on one seeded trial and writes its test accuracy.
 *
 * `model_json` is a model spec such as `{"kind": "APPNP", "alpha": 0.1}`;
 * `train_json` overrides optimizer settings and may be NULL.
 * `sketch_dim == 0` keeps the raw features. A fraction of
 * `frac_observed` nodes is observed, a fifth of which is used for
 * validation.
 *
 * # Safety
 * String arguments must be NUL-terminated; `accuracy` must be writable.
 */
GnnStatus gnn_run_trial(const GnnDataset *ds,
                        const char *model_json,
                        const char *train_json,
                        double frac_observed,
                        size_t sketch_dim,
                        uint64_t base_seed,
                        uint64_t trial_index,
                        double *accuracy);

/**
 * Runs a JSON experiment config and writes `summary.csv` and
 * `raw_trials.csv` into `out_dir`. `threads == 0` uses every core.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
GnnStatus gnn_run_experiment(const char *config_path, const char *out_dir, size_t threads);

/**
 * Mean and 95% half-width `1.96·s/√n` of `n` samples. The half-width is
 * NaN when `n < 2`.
 *
 * # Safety
 * `samples` must hold `n` doubles; `mean` and `half_width` must be writable.
 */
GnnStatus gnn_ci95(const double *samples, size_t n, double *mean, double *half_width);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GNNSTAT_H */

/* C interface to the shnn library: datasets, training, corrections and
 * evaluation of learned Hamiltonians. All functions return a status code;
 * on failure shnn_last_error() describes the problem. Handles are opaque and
 * must be released with the matching *_free function. */
#ifndef SHNN_SHNN_H
#define SHNN_SHNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(SHNN_BUILDING_LIBRARY)
#define SHNN_API __attribute__((visibility("default")))
#else
#define SHNN_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum shnn_status {
  SHNN_OK = 0,
  SHNN_ERR_INVALID_ARGUMENT = 1,
  SHNN_ERR_IO = 2,
  SHNN_ERR_FORMAT = 3,
  SHNN_ERR_NUMERICAL = 4, /* non-finite values, failed integration, divergence */
  SHNN_ERR_UNSUPPORTED = 5,
  SHNN_ERR_INTERNAL = 6
} shnn_status;

typedef enum shnn_scheme {
  SHNN_SCHEME_FORWARD_EULER = 0,
  SHNN_SCHEME_SYMPLECTIC_EULER = 1,
  SHNN_SCHEME_IMPLICIT_MIDPOINT = 2
} shnn_scheme;

typedef struct shnn_dataset shnn_dataset;
typedef struct shnn_model shnn_model;

SHNN_API const char* shnn_version(void);
/* Message of the last failed call on this thread; "" if none. */
SHNN_API const char* shnn_last_error(void);
SHNN_API const char* shnn_status_string(shnn_status status);

/* "forward-euler" | "symplectic-euler" | "implicit-midpoint" */
SHNN_API shnn_status shnn_scheme_parse(const char* name, shnn_scheme* out);

/* ---- datasets ---- */

typedef struct shnn_dataset_info {
  int n;          /* degrees of freedom */
  int size;       /* K */
  int train_size;
  int test_size;
  double h;
  uint64_t seed;
  double tolerance;
} shnn_dataset_info;

/* system: "spring" | "pendulum" | "double_pendulum"; tolerance <= 0 selects 1e-10. */
SHNN_API shnn_status shnn_dataset_generate(const char* system, double h, int k, uint64_t seed,
                                           double tolerance, shnn_dataset** out);
/* expected_h <= 0 accepts any h. */
SHNN_API shnn_status shnn_dataset_load(const char* path, double expected_h, shnn_dataset** out);
SHNN_API shnn_status shnn_dataset_save(const shnn_dataset* ds, const char* path);
SHNN_API shnn_status shnn_dataset_info_get(const shnn_dataset* ds, shnn_dataset_info* out);
/* Valid while the handle lives. */
SHNN_API const char* shnn_dataset_system(const shnn_dataset* ds);
SHNN_API void shnn_dataset_free(shnn_dataset* ds);

/* ---- training ---- */

typedef struct shnn_train_config {
  shnn_scheme scheme;
  int epochs;
  double learning_rate;
  double weight_decay;
  double beta1;
  double beta2;
  double eps;
  uint64_t seed;
  int depth; /* L, hidden layers */
  int width; /* M, neurons per hidden layer */
} shnn_train_config;

SHNN_API void shnn_train_config_default(shnn_train_config* cfg);

typedef void (*shnn_epoch_callback)(int epoch, double train_loss, double test_loss,
                                    void* user);

/* report_csv may be NULL; otherwise the per-epoch losses are written there
 * (columns epoch, train_loss, test_loss) together with a JSON sidecar. */
SHNN_API shnn_status shnn_train(const shnn_dataset* ds, const shnn_train_config* cfg,
                                const char* report_csv, shnn_epoch_callback callback,
                                void* user, shnn_model** out);

/* ---- models ---- */

typedef struct shnn_model_info {
  int n_dim;
  int depth;
  int width;
  shnn_scheme scheme;
  double h;
  int correction_order; /* 0, 2, 3 or 4 */
  uint64_t seed;
  int best_epoch;
  double best_test_loss;
} shnn_model_info;

SHNN_API shnn_status shnn_model_load(const char* path, shnn_model** out);
SHNN_API shnn_status shnn_model_save(const shnn_model* model, const char* path);
SHNN_API shnn_status shnn_model_info_get(const shnn_model* model, shnn_model_info* out);
SHNN_API const char* shnn_model_system(const shnn_model* model);
SHNN_API void shnn_model_free(shnn_model* model);

/* order 0 removes the correction; 2 and 3 need a symplectic-Euler model,
 * 4 an implicit-midpoint model. */
SHNN_API shnn_status shnn_model_set_correction(shnn_model* model, int order);

/* Corrected Hamiltonian at y (length dim = 2n). */
SHNN_API shnn_status shnn_model_eval(const shnn_model* model, const double* y, size_t dim,
                                     double* value);
/* J^{-1} grad of the corrected Hamiltonian at y, written to out[dim]. */
SHNN_API shnn_status shnn_model_symplectic_gradient(const shnn_model* model, const double* y,
                                                    size_t dim, double* out);

/* ---- evaluation ---- */

typedef struct shnn_eval_report {
  double mean; /* epsilon_H */
  double q25;
  double median;
  double q75;
  double sem;
  double offset;
  int n;
} shnn_eval_report;

/* system NULL uses the system recorded in the model. */
SHNN_API shnn_status shnn_evaluate(const shnn_model* model, const char* system, int n_samples,
                                   uint64_t seed, shnn_eval_report* out);

/* Writes t, mse, sem to csv_path (plus sidecar). final_mse may be NULL. */
SHNN_API shnn_status shnn_rollout(const shnn_model* model, const char* system, int n_traj,
                                  double t_final, uint64_t seed, const char* csv_path,
                                  double* final_mse);

/* Writes p, q, F - H - offset over the data region (one degree of freedom). */
SHNN_API shnn_status shnn_error_grid(const shnn_model* model, const char* system,
                                     int resolution, uint64_t seed, const char* csv_path);

/* Network and dataset sizes used for a system and time step: the reduced
 * defaults, or the reference sizes when paper_scale is nonzero. */
SHNN_API shnn_status shnn_scale_sizes(const char* system, double h, int paper_scale,
                                      int* depth, int* width, int* k, int* epochs);

/* paper_scale: -1 keeps the config's flag, 0 or 1 overrides it. */
SHNN_API shnn_status shnn_run_experiment(const char* config_path, const char* out_dir,
                                         int paper_scale);

#ifdef __cplusplus
}
#endif

#endif /* SHNN_SHNN_H */

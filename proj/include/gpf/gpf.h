/* gpf.h - C interface to the graph-prompt-tuning toolkit.
 *
 * Every object is an opaque handle created and destroyed through this API.
 * Functions return a gpf_status; on failure gpf_last_error() holds a
 * one-line diagnostic for the calling thread. Status values match the CLI
 * exit codes (2 validation, 3 numeric, 4 I/O).
 *
 * Strings returned through char** out-parameters are heap-allocated and must
 * be released with gpf_string_free().
 */
#ifndef GPF_H
#define GPF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gpf_status {
  GPF_OK = 0,
  GPF_ERROR_VALIDATION = 2,
  GPF_ERROR_NUMERIC = 3,
  GPF_ERROR_IO = 4
} gpf_status;

typedef struct gpf_dataset gpf_dataset;
typedef struct gpf_graph gpf_graph;
typedef struct gpf_model gpf_model;
typedef struct gpf_prompt gpf_prompt;
typedef struct gpf_spec gpf_spec; /* graph-level transformation */

const char* gpf_last_error(void);
void gpf_string_free(char* s);

void gpf_dataset_free(gpf_dataset* ds);
void gpf_graph_free(gpf_graph* g);
void gpf_model_free(gpf_model* m);
void gpf_prompt_free(gpf_prompt* p);
void gpf_spec_free(gpf_spec* s);

/* ----- datasets -------------------------------------------------------- */

/* rule: "triangle-motif" or "community-pair". */
gpf_status gpf_dataset_generate(uint64_t seed, int n_graphs, const char* rule, int feature_dim,
                                gpf_dataset** out);
gpf_status gpf_dataset_load(const char* path, gpf_dataset** out);
gpf_status gpf_dataset_save(const gpf_dataset* ds, const char* path);
gpf_status gpf_dataset_size(const gpf_dataset* ds, int* out);
gpf_status gpf_dataset_feature_dim(const gpf_dataset* ds, int* out);

/* ----- graphs and transformation specs --------------------------------- */

gpf_status gpf_graph_load(const char* path, gpf_graph** out);
gpf_status gpf_spec_load(const char* path, gpf_spec** out);
gpf_status gpf_spec_parse(const char* json_text, gpf_spec** out);

/* ----- run configs ------------------------------------------------------ */

/* Validates a run-config document (unknown keys are rejected). */
gpf_status gpf_config_validate(const char* config_json);
/* Looks up a "paths" entry; *out is NULL when the key is absent. */
gpf_status gpf_config_path(const char* config_json, const char* key, char** out);

/* ----- models ----------------------------------------------------------- */

/* config_json is a run-config document with a "model" section; the seed of
 * its "train" section (default 1) initializes the weights. */
gpf_status gpf_model_from_config(const char* config_json, gpf_model** out);
gpf_status gpf_model_load(const char* path, gpf_model** out);
gpf_status gpf_model_save(const gpf_model* m, const char* path);
gpf_status gpf_model_input_dim(const gpf_model* m, int* out);
gpf_status gpf_model_param_count(const gpf_model* m, int trainable_only, int64_t* out);
/* Table-4-style accounting for a tuning strategy ("ft", "gpf", "partial-k",
 * "mlp-k", "linear-probe"); feature_dim sizes the prompt under "gpf". */
gpf_status gpf_model_strategy_params(const gpf_model* m, const char* strategy, int feature_dim,
                                     int64_t* trainable_out, int64_t* total_out);

/* ----- prompts ---------------------------------------------------------- */

gpf_status gpf_prompt_load(const char* path, gpf_prompt** out);
gpf_status gpf_prompt_save(const gpf_prompt* p, const char* path);
gpf_status gpf_prompt_dim(const gpf_prompt* p, int* out);
/* Copies the prompt vector into buf (capacity values). */
gpf_status gpf_prompt_values(const gpf_prompt* p, double* buf, size_t capacity);

/* ----- prompt solving / verification / fitting -------------------------- */

/* Closed-form solver; requires a solver-grade model. */
gpf_status gpf_solve_prompt(const gpf_model* m, const gpf_graph* g, const gpf_spec* spec,
                            gpf_prompt** out);

/* Compares f(A, X+p) with f(spec(A, X)). report_json_out (optional) receives
 * the full equivalence report. */
gpf_status gpf_verify_equivalence(const gpf_model* m, const gpf_graph* g, const gpf_spec* spec,
                                  const gpf_prompt* p, double tolerance, double* abs_error_out,
                                  double* rel_error_out, int* passed_out, char** report_json_out);

/* Gradient-descent prompt fit for arbitrary models (the approximate route). */
gpf_status gpf_fit_prompt(const gpf_model* m, const gpf_graph* g, const gpf_spec* spec,
                          int max_steps, double learning_rate, double target_residual,
                          gpf_prompt** prompt_out, double* residual_out);

/* ----- training --------------------------------------------------------- */

/* Edge-prediction pre-training of the backbone, in place on the handle.
 * config_json needs a "train" section. */
gpf_status gpf_pretrain_edge_prediction(gpf_model* m, const gpf_dataset* ds,
                                        const char* config_json);

/* Trains a working copy under the strategy (NULL: take it from the config).
 * The input model handle is not modified. curve_csv_out receives the
 * per-epoch metric curve; prompt_out (optional) receives the tuned prompt
 * under "gpf" and NULL otherwise. */
gpf_status gpf_train(const gpf_model* m, const gpf_dataset* ds, const char* strategy,
                     const char* config_json, char** curve_csv_out, gpf_prompt** prompt_out);

/* strategies: comma-separated list, e.g. "ft,gpf,partial-1,mlp-3,linear-probe". */
gpf_status gpf_compare_strategies(const gpf_model* m, const gpf_dataset* ds,
                                  const char* strategies, const char* config_json, int n_seeds,
                                  char** table_csv_out, char** curves_csv_out);

#ifdef __cplusplus
}
#endif

#endif /* GPF_H */

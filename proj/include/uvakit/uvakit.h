/* uvakit C interface.
 *
 * Every fallible call returns a uva_status; on failure a message is available
 * from uva_last_error() on the same thread until the next failing call.
 * Objects are opaque handles released with their *_free function (NULL is
 * accepted). Strings returned through char** are heap copies released with
 * uva_string_free. Pointers returned through const char** stay valid while
 * the owning handle lives.
 */
#ifndef UVAKIT_UVAKIT_H
#define UVAKIT_UVAKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UVA_API __declspec(dllexport)
#elif defined(__GNUC__)
#define UVA_API __attribute__((visibility("default")))
#else
#define UVA_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uva_status {
  UVA_OK = 0,
  UVA_E_INVALID_ARGUMENT = 1,
  UVA_E_PARSE = 2,
  UVA_E_VALIDATION = 3,
  UVA_E_IO = 4,
  UVA_E_EXISTS = 5,
  UVA_E_HASH_MISMATCH = 6,
  UVA_E_RUNTIME = 7,
  UVA_E_INTERNAL = 8
} uva_status;

typedef struct uva_store uva_store;
typedef struct uva_pairs uva_pairs;
typedef struct uva_table uva_table;
typedef struct uva_encoder uva_encoder;
typedef struct uva_model uva_model;
typedef struct uva_experiment uva_experiment;

typedef void (*uva_log_fn)(const char* line, void* user);

UVA_API const char* uva_version(void);
UVA_API const char* uva_last_error(void);
UVA_API const char* uva_status_name(uva_status status);
UVA_API void uva_string_free(char* s);

/* ---- atoms -------------------------------------------------------------- */

UVA_API uva_status uva_store_load(const char* path, uva_store** out);
/* Same record format as the file, from memory. */
UVA_API uva_status uva_store_parse(const char* text, uva_store** out);
UVA_API void uva_store_free(uva_store* store);
UVA_API size_t uva_store_size(const uva_store* store);
UVA_API uva_status uva_store_atom(const uva_store* store, size_t index, const char** aui, const char** str,
                                  const char** src, const char** cui);
/* {"atoms":..,"concepts":..,"sources":..,"singleton_concepts":..,"atoms_per_source":{..}} */
UVA_API uva_status uva_store_summary_json(const uva_store* store, char** out_json);
/* AUIs of a concept, one per line, sorted. */
UVA_API uva_status uva_store_concept_members(const uva_store* store, const char* cui, char** out_lines);

/* ---- lexical similarity -------------------------------------------------- */

UVA_API double uva_jaccard(const char* a, const char* b);
/* Up to n non-synonymous atoms most similar to the anchor: "aui\tscore" lines. */
UVA_API uva_status uva_top_similar(const uva_store* store, const char* anchor_aui, size_t n, char** out_lines);

/* ---- pair generation ----------------------------------------------------- */

typedef struct uva_dataset_spec {
  double negative_ratio;
  size_t topn;
  double stratum_weights[3]; /* TOPN_SIM, RAN_SIM, RAN_NOSIM */
  uint64_t seed;
  int cross_source_only;
  double test_fraction;
} uva_dataset_spec;

UVA_API void uva_dataset_spec_default(uva_dataset_spec* spec);
/* Positives followed by negatives; *out_shortfall (optional) receives the
 * number of negatives that could not be produced. */
UVA_API uva_status uva_pairs_generate(const uva_store* store, const uva_dataset_spec* spec, uva_pairs** out,
                                      size_t* out_shortfall);
UVA_API uva_status uva_pairs_split(const uva_pairs* pairs, const uva_dataset_spec* spec, uva_pairs** train,
                                   uva_pairs** test);
UVA_API uva_status uva_pairs_read(const char* path, uva_pairs** out);
UVA_API uva_status uva_pairs_write(const uva_pairs* pairs, const uva_store* store, const char* path);
UVA_API size_t uva_pairs_size(const uva_pairs* pairs);
UVA_API uva_status uva_pairs_get(const uva_pairs* pairs, size_t index, const char** aui1, const char** aui2,
                                 int* label, const char** split_tag);
UVA_API void uva_pairs_free(uva_pairs* pairs);

/* ---- encoders ------------------------------------------------------------ */

/* Locators: mock | constant:<v> | toy[:layers=L,dim=D,seed=S] | process:<cmd>
 * | stub-constant:<p> | stub-symmetric | stub-asymmetric. */
UVA_API uva_status uva_encoder_open(const char* locator, const char* tokenizer_spec, uva_encoder** out);
UVA_API uva_status uva_encoder_open_registry(const char* registry_path, const char* model_name, uva_encoder** out);
UVA_API void uva_encoder_free(uva_encoder* encoder);

/* ---- embedding tables ---------------------------------------------------- */

UVA_API uva_status uva_table_load(const char* path, uva_table** out);
UVA_API uva_status uva_table_write(const uva_table* table, const char* path);
/* Random vectors for every word token of the store's atom strings. */
UVA_API uva_status uva_table_random(const uva_store* store, size_t dim, uint64_t seed, uva_table** out);
/* strategy: "<first|last|average>-<last_layer|avg_last4>" */
UVA_API uva_status uva_table_extract(const uva_encoder* encoder, const uva_store* store, const char* strategy,
                                     size_t max_tokens, uva_table** out);
UVA_API size_t uva_table_size(const uva_table* table);
UVA_API size_t uva_table_dim(const uva_table* table);
/* Copies dim values; unknown tokens give the OOV vector and *found = 0. */
UVA_API uva_status uva_table_vector(const uva_table* table, const char* token, double* out, size_t dim, int* found);
UVA_API void uva_table_free(uva_table* table);

/* ---- siamese model ------------------------------------------------------- */

typedef struct uva_siamese_config {
  size_t lstm_hidden;
  size_t dense1_units;
  size_t dense2_units;
  int use_attention;
  size_t attention_units;
  size_t max_tokens;
  double learning_rate;
  size_t batch_size;
  size_t epochs;
  double threshold;
  uint64_t seed;
  int trainable_embeddings;
  size_t threads;
} uva_siamese_config;

typedef struct uva_metrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  double threshold;
  uint64_t tp, fp, fn, tn;
  int degenerate;
} uva_metrics;

UVA_API void uva_siamese_config_default(uva_siamese_config* config);
UVA_API uva_status uva_model_build(const uva_siamese_config* config, const uva_table* table, uva_model** out);
/* Trains until config.epochs; valid may be NULL. loss_out (optional) receives
 * the per-epoch losses, at most loss_capacity of them. */
UVA_API uva_status uva_model_train(uva_model* model, const uva_store* store, const uva_pairs* train,
                                   const uva_pairs* valid, double* loss_out, size_t loss_capacity);
UVA_API uva_status uva_model_similarity(const uva_model* model, const char* a, const char* b, double* out);
UVA_API uva_status uva_model_evaluate(const uva_model* model, const uva_store* store, const uva_pairs* pairs,
                                      double threshold, uva_metrics* out);
UVA_API uva_status uva_model_save(const uva_model* model, const char* path);
UVA_API uva_status uva_model_load(const char* path, uva_model** out);
UVA_API uva_status uva_model_checksum(const uva_model* model, char** out_hex);
UVA_API void uva_model_free(uva_model* model);

/* ---- cross-encoder ------------------------------------------------------- */

typedef enum uva_order { UVA_ORDER_IJ = 0, UVA_ORDER_JI = 1 } uva_order;

/* {"tokens":[..],"segments":[..]} */
UVA_API uva_status uva_cross_format(const uva_encoder* encoder, const char* a, const char* b, size_t max_len,
                                    char** out_json);
UVA_API uva_status uva_cross_predict(const uva_encoder* encoder, const char* a, const char* b, double threshold,
                                     double* score, int* label);
UVA_API uva_status uva_cross_evaluate(const uva_encoder* encoder, const uva_store* store, const uva_pairs* pairs,
                                      uva_order order, double threshold, uva_metrics* out);

/* ---- metrics ------------------------------------------------------------- */

UVA_API uva_status uva_metrics_compute(const double* scores, const int* labels, size_t n, double threshold,
                                       uva_metrics* out);

typedef enum uva_table_style { UVA_STYLE_MARKDOWN = 0, UVA_STYLE_CSV = 1 } uva_table_style;

UVA_API uva_status uva_metrics_render(const char* const* models, const char* const* configurations,
                                      const uva_metrics* rows, size_t n, uva_table_style style, char** out);

/* ---- experiments --------------------------------------------------------- */

enum { UVA_RUN_FORCE = 1u, UVA_RUN_RESUME = 2u };

/* Reads a config file (NULL: defaults), then applies the UVAKIT_* path
 * variables from the environment. */
UVA_API uva_status uva_experiment_load(const char* config_path, uva_experiment** out);
/* Sets one config key from a JSON literal, e.g. ("seed", "7") or
 * ("out_dir", "\"runs/a\""). */
UVA_API uva_status uva_experiment_set(uva_experiment* exp, const char* key, const char* json_value);
UVA_API uva_status uva_experiment_config_json(const uva_experiment* exp, char** out);
/* command: ingest | gen-pairs | extract | train | eval | cross-eval | run */
UVA_API uva_status uva_experiment_run(const uva_experiment* exp, const char* command, unsigned flags,
                                      uva_log_fn log, void* user, char** out_summary);
UVA_API void uva_experiment_free(uva_experiment* exp);

UVA_API uva_status uva_report(const char* const* run_dirs, size_t n, uva_table_style style, char** out);
/* *out_mismatches receives the number of outputs whose bytes differ. */
UVA_API uva_status uva_replay(const char* run_dir, const char* out_dir, unsigned flags, uva_log_fn log, void* user,
                              char** out_log, size_t* out_mismatches);
UVA_API uva_status uva_synth_corpus(const char* path, uint64_t seed, size_t concepts, int force);
UVA_API uva_status uva_config_schema(char** out);

#ifdef __cplusplus
}
#endif

#endif /* UVAKIT_UVAKIT_H */

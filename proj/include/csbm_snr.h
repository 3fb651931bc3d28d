#ifndef CSBM_SNR_H
#define CSBM_SNR_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CSBM_API __declspec(dllexport)
#else
#define CSBM_API __attribute__((visibility("default")))
#endif

typedef enum csbm_status {
  CSBM_OK = 0,
  CSBM_INVALID_ARGUMENT = 1,
  CSBM_CONFIG = 2,
  CSBM_GUARD = 3,
  CSBM_NUMERIC = 4,
  CSBM_IO = 5,
  CSBM_INTERNAL = 6,
  /* The run completed and wrote its outputs, but at least one hard check failed. */
  CSBM_CHECK_FAILED = 7
} csbm_status;

typedef struct csbm_model csbm_model;
typedef struct csbm_graph csbm_graph;
typedef struct csbm_features csbm_features;

/* Strings returned through char** out-parameters are owned by the caller; release with csbm_string_free. */
CSBM_API void csbm_string_free(char* s);

/* Message of the last failed call on this thread; empty if none. Valid until the next call. */
CSBM_API const char* csbm_last_error(void);
CSBM_API const char* csbm_status_name(csbm_status status);
CSBM_API const char* csbm_build_id(void);

/* Thread count used when 0 is passed: CSBM_SNR_THREADS, then hardware concurrency. */
CSBM_API unsigned csbm_resolve_threads(unsigned requested);

/* ---- models ---- */
CSBM_API csbm_status csbm_model_load(const char* path, csbm_model** out);
CSBM_API csbm_status csbm_model_parse(const char* text, csbm_model** out);
CSBM_API void csbm_model_free(csbm_model* model);
CSBM_API csbm_status csbm_model_to_json(const csbm_model* model, char** json);
/* The aggregation depth k stored in the model file. */
CSBM_API csbm_status csbm_model_depth(const csbm_model* model, int* k);
/* node,label (labels 1-based) */
CSBM_API csbm_status csbm_model_write_labels(const csbm_model* model, const char* path);

/* ---- sampling ---- */
CSBM_API csbm_status csbm_graph_sample(const csbm_model* model, uint64_t seed, csbm_graph** out);
CSBM_API void csbm_graph_free(csbm_graph* graph);
CSBM_API csbm_status csbm_graph_edge_count(const csbm_graph* graph, uint64_t* count);
/* One "i j" line per undirected edge, 0-based, i < j. */
CSBM_API csbm_status csbm_graph_write_edges(const csbm_graph* graph, const char* path);

CSBM_API csbm_status csbm_features_sample(const csbm_model* model, uint64_t seed, csbm_features** out);
CSBM_API void csbm_features_free(csbm_features* features);
/* node,x1..xd */
CSBM_API csbm_status csbm_features_write_csv(const csbm_features* features, const char* path);

/* Dev, rho and the class-center distances of A^k X, as JSON. */
CSBM_API csbm_status csbm_snr_json(const csbm_model* model, const csbm_graph* graph, const csbm_features* features,
                                   int k, char** json);

/* ---- verification runs ----
   out_dir may be NULL (nothing written). summary_json may be NULL. threads = 0 resolves as above.
   Returns CSBM_CHECK_FAILED when a hard check fails; outputs are still written. */
typedef struct csbm_verify_options {
  const char* level;     /* "quick" or "full"; NULL means quick */
  uint64_t seed;
  unsigned threads;
  int inject_catalan_fault;  /* mutation check: perturbs one Catalan number */
  const char* sections;      /* comma-separated section names; NULL or "" means all */
} csbm_verify_options;

CSBM_API void csbm_verify_options_default(csbm_verify_options* options);
CSBM_API csbm_status csbm_verify_suite(const csbm_verify_options* options, const char* out_dir, char** summary_json);

/* Signal brackets plus noise and main-theorem checks for one model at its depth k. */
CSBM_API csbm_status csbm_bounds_check(const csbm_model* model, int trials, uint64_t seed, unsigned threads,
                                       double epsilon, const char* out_dir, char** report_json);

/* Runs an experiment plan file (TOML or JSON). seed_override and out_dir_override may be NULL. */
CSBM_API csbm_status csbm_experiment_run(const char* plan_path, const uint64_t* seed_override, unsigned threads,
                                         const char* out_dir_override, char** report_json);

#ifdef __cplusplus
}
#endif

#endif

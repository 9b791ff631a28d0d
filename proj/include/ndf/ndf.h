/* Neural-ODE multi-band localization: C interface. */
#ifndef NDF_NDF_H
#define NDF_NDF_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(NDF_BUILDING_LIBRARY)
#    define NDF_API __declspec(dllexport)
#  else
#    define NDF_API __declspec(dllimport)
#  endif
#else
#  define NDF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ndf_status {
  NDF_OK = 0,
  NDF_ERR_INVALID_ARGUMENT = 1,
  NDF_ERR_IO = 2,
  NDF_ERR_NUMERIC = 3, /* non-finite loss or gradient */
  NDF_ERR_SOLVER = 4,  /* adaptive solver exceeded its step budget */
  NDF_ERR_INTERNAL = 5
} ndf_status;

typedef struct ndf_dataset ndf_dataset;
typedef struct ndf_model ndf_model;

/* Receives one JSON line per progress event (epoch, trial). */
typedef void (*ndf_log_fn)(const char* json_line, void* user);

NDF_API const char* ndf_version(void);
NDF_API const char* ndf_status_string(int status);
/* Message of the last failing call on this thread; empty after success. */
NDF_API const char* ndf_last_error(void);
NDF_API void ndf_string_free(char* s);
NDF_API void ndf_set_log_callback(ndf_log_fn fn, void* user);

/* Strings returned through char** are JSON and must be released with
 * ndf_string_free. Any such out pointer may be NULL. */

/* Writes scenario.json and {train,val,test}.jsonl (plus raw_csi_*.jsonl when
 * requested) for a synthetic scenario given as JSON ("{}" for defaults). */
NDF_API int ndf_simulate(const char* scenario_json, const char* out_dir, char** summary_json);

NDF_API int ndf_dataset_open(const char* dir, const char* split, ndf_dataset** out);
NDF_API void ndf_dataset_free(ndf_dataset* ds);
NDF_API int ndf_dataset_window_count(const ndf_dataset* ds, size_t* out);
NDF_API int ndf_dataset_info(const ndf_dataset* ds, char** info_json);
/* Replaces the CSI stream with embeddings of the split's raw CSI frames. */
NDF_API int ndf_dataset_embed_raw_csi(ndf_dataset* ds, const char* cae_dir);

/* {"kind": "ndf" | "linear_int" | "nearest_int" | "rnn_decay" | "rnn_delta", ...} */
NDF_API int ndf_model_create(const char* model_json, ndf_model** out);
NDF_API int ndf_model_load(const char* checkpoint_dir, ndf_model** out);
NDF_API int ndf_model_save(const ndf_model* model, const char* checkpoint_dir);
NDF_API void ndf_model_free(ndf_model* model);
NDF_API int ndf_model_info(const ndf_model* model, char** info_json);

/* Trains in place and writes losses.csv and checkpoint/ under out_dir.
 * A non-finite loss stops training, keeps the best parameters, still writes
 * both files and returns NDF_ERR_NUMERIC. val may be NULL. */
NDF_API int ndf_train(ndf_model* model, const ndf_dataset* train, const ndf_dataset* val, const char* train_json,
                      const char* out_dir, char** summary_json);

/* Writes report.json and predictions.csv under out_dir when it is not NULL. */
NDF_API int ndf_evaluate(const ndf_model* model, const ndf_dataset* test, const char* out_dir, char** report_json);

/* Random search over the loss weights; writes search.csv and best.json. */
NDF_API int ndf_search(const char* model_json, const ndf_dataset* train, const ndf_dataset* val,
                       const char* search_json, const char* out_dir, char** result_json);

/* regions_json: [{"name", "box": [x_min, y_min, x_max, y_max]}, ...] or NULL
 * for eight regions along the dataset's track. */
NDF_API int ndf_export_latents(const ndf_model* model, const ndf_dataset* ds, const char* regions_json,
                               const char* out_path, char** summary_json);

/* Pretrains the CSI autoencoder on raw_csi_train.jsonl (held out: raw_csi_val.jsonl). */
NDF_API int ndf_pretrain_cae(const char* dataset_dir, const char* options_json, const char* out_dir,
                             char** summary_json);

/* kind: "trajectory" | "cdf" | "latent".
 * inputs_json: {"files": [...], "labels": [...], "t_from": s, "t_to": s} */
NDF_API int ndf_plot(const char* kind, const char* inputs_json, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* NDF_NDF_H */

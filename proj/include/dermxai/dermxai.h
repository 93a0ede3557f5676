#ifndef DERMXAI_DERMXAI_H
#define DERMXAI_DERMXAI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DX_API __declspec(dllexport)
#else
#define DX_API __attribute__((visibility("default")))
#endif

typedef enum dx_status {
  DX_OK = 0,
  DX_ERR_INVALID_ARGUMENT = 1,
  DX_ERR_NOT_FOUND = 2,
  DX_ERR_PARSE = 3,
  DX_ERR_DATA = 4,
  DX_ERR_CAPABILITY = 5,
  DX_ERR_NUMERIC = 6,
  DX_ERR_IO = 7,
  DX_ERR_INTERNAL = 8
} dx_status;

typedef struct dx_model dx_model;

typedef void (*dx_epoch_callback)(int epoch, double train_loss, double train_accuracy, double val_loss,
                                  double val_accuracy, double learning_rate, void* user);

DX_API const char* dx_version(void);

/* Message of the last failed call on this thread ("" if none). */
DX_API const char* dx_last_error(void);

DX_API int dx_deterministic_mode(void);

/* Splits the metadata and writes train/val/test archives plus reports.
   metadata_only != 0 writes split.json and split_report.csv only. */
DX_API dx_status dx_prepare(const char* metadata_csv, const char* image_dir, const char* out_dir, uint64_t seed,
                            int side, int metadata_only, int workers);

/* overrides_json: JSON object merged over the config file (may be NULL).
   policy_file: augmentation policy JSON (may be NULL). */
DX_API dx_status dx_train(const char* config_file, const char* overrides_json, const char* policy_file,
                          const char* data_dir, const char* out_dir, dx_epoch_callback callback, void* user);

/* Parses and validates a training configuration without running anything. */
DX_API dx_status dx_validate_config(const char* config_file, const char* overrides_json, const char* policy_file);

/* accuracy_out may be NULL. */
DX_API dx_status dx_evaluate(const char* checkpoint_dir, const char* data_dir, const char* partition,
                             const char* out_dir, double* accuracy_out);

/* target: "auto", a class code or a class index. params_json may be NULL. */
DX_API dx_status dx_explain(const char* checkpoint_dir, const char* image, const char* method, const char* target,
                            const char* params_json, const char* out_png);

/* prior_work_csv and out_prefix may be NULL. The Markdown table is written
   to markdown_out (NUL-terminated, truncated to capacity) when non-NULL. */
DX_API dx_status dx_report(const char* const* run_dirs, size_t n_run_dirs, const char* prior_work_csv,
                           const char* out_prefix, char* markdown_out, size_t capacity);

DX_API dx_status dx_model_load(const char* checkpoint_dir, dx_model** out);
DX_API void dx_model_free(dx_model* model);
DX_API int dx_model_num_classes(const dx_model* model);
DX_API int dx_model_input_size(const dx_model* model);
/* image: HWC float32 RGB in [0,1]. probs_out holds num_classes values. */
DX_API dx_status dx_model_predict(const dx_model* model, const float* image, int height, int width, int channels,
                                  double* probs_out);

/* Confusion-matrix metrics over n labels in [0,7). */
DX_API dx_status dx_weighted_metrics(const int* y_true, const int* y_pred, size_t n, double* accuracy,
                                     double* precision, double* recall, double* f1);

#ifdef __cplusplus
}
#endif

#endif

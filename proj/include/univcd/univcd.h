#ifndef UNIVCD_H
#define UNIVCD_H

/* C interface of libunivcd. Every call returns a status; on failure the message is available
 * from univcd_last_error() until the next failing call on the same thread. Handles are opaque
 * and owned by the caller once created. Strings returned through char** are freed with
 * univcd_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define UNIVCD_API __declspec(dllexport)
#else
#define UNIVCD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 2-5 double as the CLI exit statuses. */
typedef enum univcd_status {
  UNIVCD_OK = 0,
  UNIVCD_ERR_INVALID_ARGUMENT = 1,
  UNIVCD_ERR_CONFIG = 2,
  UNIVCD_ERR_DATA = 3,
  UNIVCD_ERR_MODEL = 4,
  UNIVCD_ERR_REFINER = 5,
  UNIVCD_ERR_IO = 6,
  UNIVCD_ERR_DEGENERATE = 7,
  UNIVCD_ERR_UNSUPPORTED = 8,
  UNIVCD_ERR_INTERNAL = 9
} univcd_status;

typedef struct univcd_config univcd_config;
typedef struct univcd_raster univcd_raster;
typedef struct univcd_encoders univcd_encoders;
typedef struct univcd_model univcd_model;

UNIVCD_API const char* univcd_version(void);
UNIVCD_API const char* univcd_status_name(univcd_status status);
/* Message of the last failure on this thread ("" when none). */
UNIVCD_API const char* univcd_last_error(void);
UNIVCD_API void univcd_string_free(char* s);

/* ---- configuration ---- */

UNIVCD_API univcd_status univcd_config_default(univcd_config** out);
/* The cache-directory environment override (UNIVCD_CACHE_DIR) is applied when the config is
 * used, not when it is parsed. */
UNIVCD_API univcd_status univcd_config_load(const char* path, univcd_config** out);
UNIVCD_API univcd_status univcd_config_parse(const char* json, univcd_config** out);
/* Dotted key ("train.epochs"); value is JSON, or a bare string. */
UNIVCD_API univcd_status univcd_config_set(univcd_config* config, const char* key, const char* value);
UNIVCD_API univcd_status univcd_config_serialize(const univcd_config* config, char** out_json);
UNIVCD_API univcd_status univcd_config_equal(const univcd_config* a, const univcd_config* b, int* out_equal);
UNIVCD_API void univcd_config_free(univcd_config* config);

/* ---- pipeline stages; outputs land under the config's output_dir ---- */

/* `skipped` (optional) reports a resumed stage that was not rerun. */
UNIVCD_API univcd_status univcd_cmd_train(const univcd_config* config, int resume, int* skipped);
/* Both paths NULL: every pair of the configured dataset layout. */
UNIVCD_API univcd_status univcd_cmd_detect(const univcd_config* config, const char* image_a, const char* image_b,
                                           int resume, int* skipped);
UNIVCD_API univcd_status univcd_cmd_postprocess(const univcd_config* config, const char* image_a,
                                                const char* image_b, int resume, int* skipped);
/* pred_dir / label_root may be NULL for the configured defaults; `report_table` (optional)
 * receives the human-readable table even when predictions are missing (UNIVCD_ERR_DATA). */
UNIVCD_API univcd_status univcd_cmd_evaluate(const univcd_config* config, const char* pred_dir,
                                             const char* label_root, char** report_table);
UNIVCD_API univcd_status univcd_cmd_baseline(const univcd_config* config, const char* masks_a,
                                             const char* masks_b, const char* name);
UNIVCD_API univcd_status univcd_cmd_export_viz(const univcd_config* config, const char* pred_dir);
UNIVCD_API univcd_status univcd_cmd_synth(const univcd_config* config, const char* dir, int pairs,
                                          int train_scenes, uint64_t seed);

/* ---- rasters: height x width x channels doubles, channel innermost ---- */

UNIVCD_API univcd_status univcd_raster_create(int height, int width, int channels, const double* values,
                                              univcd_raster** out);
UNIVCD_API univcd_status univcd_raster_load(const char* path, univcd_raster** out);
UNIVCD_API univcd_status univcd_raster_save(const univcd_raster* raster, const char* path);
UNIVCD_API univcd_status univcd_raster_shape(const univcd_raster* raster, int* height, int* width, int* channels);
/* Borrowed pointer, valid until the raster is freed. */
UNIVCD_API const double* univcd_raster_data(const univcd_raster* raster);
UNIVCD_API void univcd_raster_free(univcd_raster* raster);

/* ---- models and detection ---- */

UNIVCD_API univcd_status univcd_encoders_create(const univcd_config* config, univcd_encoders** out);
UNIVCD_API univcd_status univcd_encoders_fingerprint(const univcd_encoders* encoders, char** out);
UNIVCD_API void univcd_encoders_free(univcd_encoders* encoders);

UNIVCD_API univcd_status univcd_model_load(const char* checkpoint, univcd_model** out);
UNIVCD_API void univcd_model_free(univcd_model* model);

/* H x W x K likelihood over the config's detect categories. `model` may be NULL only under the
 * no_scfam ablation. */
UNIVCD_API univcd_status univcd_detect_pair(const univcd_config* config, const univcd_encoders* encoders,
                                            const univcd_model* model, const univcd_raster* image_a,
                                            const univcd_raster* image_b, univcd_raster** likelihood,
                                            univcd_raster** scores_a, univcd_raster** scores_b);

/* ---- post-processing ---- */

/* Fills `mask` (height x width bytes, 0/1) for a box + positive point prompt on `image`.
 * Nonzero return marks a failed call; the candidate is then kept with a warning. */
typedef int (*univcd_segment_fn)(void* user, const univcd_raster* image, const int box[4], int point_row,
                                 int point_col, uint8_t* mask, int height, int width);

UNIVCD_API univcd_status univcd_otsu_threshold(const univcd_raster* likelihood, double* threshold);

/* Stage 1 on channel `category` of `likelihood`, then stage 2 through `segment` when it is
 * non-NULL (images and score maps required then). `mask_out` receives height x width bytes. */
UNIVCD_API univcd_status univcd_postprocess(const univcd_config* config, const univcd_raster* likelihood,
                                            int category, const univcd_raster* image_a,
                                            const univcd_raster* image_b, const univcd_raster* scores_a,
                                            const univcd_raster* scores_b, univcd_segment_fn segment,
                                            void* user, uint8_t* mask_out, size_t mask_len);

/* ---- metrics ---- */

/* out[6] = precision, recall, f1, iou, no-change iou, miou. */
UNIVCD_API univcd_status univcd_metrics(uint64_t tp, uint64_t fp, uint64_t fn, uint64_t tn, double out[6]);

#ifdef __cplusplus
}
#endif

#endif

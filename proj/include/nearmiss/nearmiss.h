/* nearmiss: dashcam incident classification toolkit, C interface. */
#ifndef NEARMISS_NEARMISS_H
#define NEARMISS_NEARMISS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NM_API __declspec(dllexport)
#else
#define NM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nm_status {
    NM_OK = 0,
    NM_ERR_PARSE = 1,
    NM_ERR_VALIDATION = 2,
    NM_ERR_DOMAIN = 3,
    NM_ERR_IO = 4,
    NM_ERR_RANGE = 5,
    NM_ERR_SHAPE = 6,
    NM_ERR_NUMERIC = 7,
    NM_ERR_LOAD = 8,
    NM_ERR_USAGE = 9,
    NM_ERR_RUNTIME = 10,
    NM_ERR_NULL_ARG = 11
} nm_status;

typedef enum nm_accuracy_mode { NM_ACC_TOP1 = 0, NM_ACC_OVR_MACRO = 1 } nm_accuracy_mode;

/* Message of the last failure on the calling thread ("" if none). */
NM_API const char* nm_last_error(void);
NM_API const char* nm_status_name(nm_status status);
NM_API const char* nm_version(void);

/* Strings handed out by the library are released with this. */
NM_API void nm_string_free(char* s);

/* ---- annotations -------------------------------------------------------- */

typedef struct nm_annotations nm_annotations;

NM_API nm_status nm_annotations_load(const char* path, nm_annotations** out);
NM_API nm_status nm_annotations_parse(const char* jsonl, nm_annotations** out);
NM_API void nm_annotations_free(nm_annotations* a);
NM_API size_t nm_annotations_count(const nm_annotations* a);
NM_API nm_status nm_annotations_to_jsonl(const nm_annotations* a, char** out);

/* One JSON line per record. overrides_path may be NULL. */
NM_API nm_status nm_annotations_validate(const nm_annotations* a, const char* overrides_path, char** report_jsonl,
                                         size_t* violating_records);
NM_API nm_status nm_annotations_filter(const nm_annotations* a, nm_annotations** out);

NM_API nm_status nm_taxonomy_size(int level, int* out);
NM_API nm_status nm_map_class(int class16, int level, int* out);
NM_API nm_status nm_derive_normal_start(double t3, double* out);

/* ---- data ----------------------------------------------------------------- */

NM_API nm_status nm_synth_generate(const char* spec_json, uint64_t seed, const char* out_dir, char** manifest_json);

/* Cuts incident/normal segments into a clip set and writes split.json.
   options_json: {"level","height","width","split_mode","seed","overrides","filter"}. */
NM_API nm_status nm_clip_corpus(const char* videos_dir, const char* annotations_path, const char* out_dir,
                                const char* options_json, char** summary_json);

/* Frame range [begin, end) of the incident segment. */
NM_API nm_status nm_incident_range(double t0, double t3, double fps, long frame_count, long* begin, long* end);

/* ---- style translation --------------------------------------------------- */

typedef struct nm_codec nm_codec;

/* config_json: {"preset","height","width","steps","lr","batch","seed","weights":{...}}. */
NM_API nm_status nm_cst_train(const char* day_dir, const char* night_dir, const char* config_json, nm_codec** out,
                              char** log_csv);
NM_API nm_status nm_codec_load(const char* path, nm_codec** out);
NM_API nm_status nm_codec_save(const nm_codec* codec, const char* path);
NM_API void nm_codec_free(nm_codec* codec);
/* Writes originals plus both fakes of every clip in in_dir (a clip set). */
NM_API nm_status nm_cst_translate(const nm_codec* codec, const char* in_dir, const char* out_dir, size_t* clips_written);

/* ---- classifier ---------------------------------------------------------- */

typedef struct nm_classifier nm_classifier;

/* config_json: {"preset","num_classes","clip_len","height","width","seed","width_divisor"}. */
NM_API nm_status nm_classifier_create(const char* config_json, nm_classifier** out);
NM_API nm_status nm_classifier_load(const char* path, nm_classifier** out);
NM_API nm_status nm_classifier_save(const nm_classifier* clf, const char* path);
NM_API nm_status nm_classifier_load_backbone(nm_classifier* clf, const char* path);
NM_API void nm_classifier_free(nm_classifier* clf);
NM_API size_t nm_classifier_param_count(const nm_classifier* clf);
NM_API int nm_classifier_num_classes(const nm_classifier* clf);

/* frames: frame_count x height x width x 3 floats in [0,1]. probs may be NULL. */
NM_API nm_status nm_classifier_predict(const nm_classifier* clf, const float* frames, int frame_count, int height,
                                       int width, int* class_id, double* probs, size_t probs_len);

/* ---- training / evaluation ------------------------------------------------ */

/* config_json: {"clips","train_dir","val_dir","out_dir","classifier":{...},"train":{...}}. */
NM_API nm_status nm_train(const char* config_json, char** result_json);

NM_API nm_status nm_confusion_accuracy(const int* truth, const int* pred, size_t n, int classes,
                                       nm_accuracy_mode mode, double* out);

/* Evaluates a model over a clip set (optionally one partition of its split). */
NM_API nm_status nm_eval_run(const char* model_path, const char* clips_dir, const char* partition,
                             const char* out_dir, char** result_json);
/* annotations_path may be NULL; with it the ground-truth window is overlaid. */
NM_API nm_status nm_eval_timeline(const char* model_path, const char* video_dir, const char* annotations_path,
                                  int stride, const char* out_dir, char** result_json);
NM_API nm_status nm_eval_crossval(const char* model_path, const char* annotations_path, const char* videos_dir,
                                  int level, char** result_json);

/* ---- experiment matrix ----------------------------------------------------- */

NM_API nm_status nm_describe_matrix(const char* config_json, char** out);
/* Progress goes to stderr. all_ok is set to 1 when every cell trained. */
NM_API nm_status nm_run_all(const char* config_json, char** result_json, int* all_ok);

#ifdef __cplusplus
}
#endif

#endif

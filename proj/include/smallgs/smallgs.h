#ifndef SMALLGS_H
#define SMALLGS_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SGS_API __declspec(dllexport)
#else
#define SGS_API __attribute__((visibility("default")))
#endif

typedef enum sgs_status {
    SGS_OK = 0,
    SGS_ERR_INVALID_ARGUMENT = 1,
    SGS_ERR_SHAPE_MISMATCH = 2,
    SGS_ERR_IO = 3,
    SGS_ERR_PARSE = 4,
    SGS_ERR_UNSUPPORTED_FORMAT = 5,
    SGS_ERR_DEGENERATE = 6,
    SGS_ERR_FROZEN_SCENE = 7,
    SGS_ERR_CONFIG = 8,
    SGS_ERR_INTERNAL = 9
} sgs_status;

typedef enum sgs_log_level { SGS_LOG_DEBUG = 0, SGS_LOG_INFO = 1, SGS_LOG_WARN = 2, SGS_LOG_ERROR = 3 } sgs_log_level;

typedef struct sgs_config sgs_config;
typedef struct sgs_dataset sgs_dataset;
typedef struct sgs_trajectory sgs_trajectory;
typedef struct sgs_map sgs_map;

/* Camera-to-world pose; quaternion stored x, y, z, w. */
typedef struct sgs_pose {
    double t[3];
    double q[4];
} sgs_pose;

typedef struct sgs_metrics {
    double ate_rmse;
    double rpe_rot;
    double rpe_trans;
    double delta_v;
    int n_frames;
    int with_scale;
} sgs_metrics;

typedef struct sgs_synth_summary {
    int n_frames;
    int width;
    int height;
    int n_gaussians;
    int payload_dim;
    int n_dynamic;
    double mean_depth;
} sgs_synth_summary;

/* Message of the last failure on the calling thread; empty after success. */
SGS_API const char* sgs_last_error(void);
SGS_API const char* sgs_status_name(sgs_status status);
SGS_API const char* sgs_version(void);

/* Each call receives one JSON object without a trailing newline. NULL
   restores the default (warnings and errors to stderr). */
typedef void (*sgs_log_fn)(sgs_log_level level, const char* json_line, void* user);
SGS_API void sgs_set_log_callback(sgs_log_fn fn, void* user);

/* Strings returned through char** are owned by the caller. */
SGS_API void sgs_string_free(char* s);

/* Run configuration. NULL or "" json selects the defaults. */
SGS_API sgs_status sgs_config_parse(const char* json, sgs_config** out);
SGS_API sgs_status sgs_config_load(const char* path, sgs_config** out);
SGS_API sgs_status sgs_config_to_json(const sgs_config* cfg, char** out);
SGS_API void sgs_config_destroy(sgs_config* cfg);

SGS_API sgs_status sgs_dataset_open(const char* dir, sgs_dataset** out);
SGS_API int sgs_dataset_frame_count(const sgs_dataset* ds);
SGS_API void sgs_dataset_destroy(sgs_dataset* ds);

SGS_API sgs_status sgs_trajectory_create(const double* timestamps, const sgs_pose* poses, size_t n,
                                         sgs_trajectory** out);
SGS_API sgs_status sgs_trajectory_read(const char* path, sgs_trajectory** out);
SGS_API sgs_status sgs_trajectory_parse(const char* text, sgs_trajectory** out);
SGS_API sgs_status sgs_trajectory_write(const sgs_trajectory* t, const char* path);
SGS_API size_t sgs_trajectory_size(const sgs_trajectory* t);
SGS_API sgs_status sgs_trajectory_get(const sgs_trajectory* t, size_t i, double* timestamp, sgs_pose* pose);
SGS_API void sgs_trajectory_destroy(sgs_trajectory* t);

/* One TUM line: "timestamp tx ty tz qx qy qz qw". */
SGS_API sgs_status sgs_parse_pose_line(const char* line, double* timestamp, sgs_pose* pose);

/* Writes the dataset layout and groundtruth.txt into out_dir. summary may be NULL. */
SGS_API sgs_status sgs_synth_generate(const char* config_json, const char* out_dir, sgs_synth_summary* summary);

/* init may be NULL; otherwise one camera-to-world pose per frame to refine. */
SGS_API sgs_status sgs_estimate(const sgs_dataset* ds, const sgs_config* cfg, const sgs_trajectory* init,
                                sgs_trajectory** out);

SGS_API sgs_status sgs_evaluate(const sgs_trajectory* est, const sgs_trajectory* gt, int with_scale,
                                sgs_metrics* out);
SGS_API sgs_status sgs_metrics_to_json(const sgs_metrics* m, char** out);
SGS_API sgs_status sgs_metrics_to_table(const sgs_metrics* m, char** out);

/* Timestamp-associated positions as n rows of 7 doubles: timestamp, gt xyz,
   est xyz after the ATE alignment onto gt. Free rows with sgs_buffer_free. */
SGS_API sgs_status sgs_align_positions(const sgs_trajectory* est, const sgs_trajectory* gt, int with_scale,
                                       double** rows, size_t* n);
SGS_API void sgs_buffer_free(double* p);

/* Fits the canonical scene of the window holding frame and renders it at
   pose, given relative to that window's canonical camera. */
SGS_API sgs_status sgs_render(const sgs_dataset* ds, const sgs_config* cfg, int frame, const sgs_pose* pose,
                              sgs_map** out);

SGS_API sgs_status sgs_map_read(const char* path, sgs_map** out);
SGS_API sgs_status sgs_map_write(const sgs_map* m, const char* path);
SGS_API int sgs_map_width(const sgs_map* m);
SGS_API int sgs_map_height(const sgs_map* m);
SGS_API int sgs_map_channels(const sgs_map* m);
/* Interleaved rows: data[(y * width + x) * channels + c]. */
SGS_API const double* sgs_map_data(const sgs_map* m);
SGS_API void sgs_map_destroy(sgs_map* m);

#ifdef __cplusplus
}
#endif

#endif

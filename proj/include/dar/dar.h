/*
 * dar — disentangled audio representations for toy talking-head synthesis.
 *
 * C API over the shared library. All functions return a dar_status; on any
 * non-zero status, dar_last_error() carries a human-readable message for the
 * calling thread. Rich configuration travels as JSON strings; array data as
 * caller-owned float buffers.
 */
#ifndef DAR_DAR_H
#define DAR_DAR_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dar_status {
  DAR_OK = 0,
  DAR_ERR_INVALID_ARGUMENT = 1,
  DAR_ERR_IO = 2,
  DAR_ERR_MISSING_DEPENDENCY = 3,
  DAR_ERR_NUMERIC = 4,
  DAR_ERR_INTERNAL = 5,
} dar_status;

const char* dar_version(void);
const char* dar_status_name(dar_status status);
/* Message for the most recent failing call on this thread; empty if none. */
const char* dar_last_error(void);

/* Torch intra-op thread count; 0 keeps the library default. */
dar_status dar_set_num_threads(int threads);

/* ---- corpus ---- */

/* config_json: {"num_sequences":40,"min_segments":20,"max_segments":60,"seed":7,...} */
dar_status dar_synth_corpus(const char* config_json, const char* out_dir, int overwrite);
/* 16 hex chars + NUL written to out_hex (FNV-1a over the directory tree). */
dar_status dar_corpus_digest(const char* corpus_dir, char out_hex[17]);

/* ---- features ---- */

/* Frames produced by the 25 ms / 10 ms STFT for num_samples of audio. */
dar_status dar_stft_frame_count(int64_t num_samples, int64_t* out_frames);
/* out must hold dar_stft_frame_count(num_samples) * 200 floats. */
dar_status dar_stft_log_magnitude(const float* waveform, int64_t num_samples, int sample_rate,
                                  float* out);
/* Uniform white noise at level_db (< 0) relative to signal RMS; in/out may alias. */
dar_status dar_add_white_noise(const float* in, float* out, int64_t num_samples, double level_db,
                               uint64_t seed);

/* ---- training and evaluation ---- */

/* config_json: {"stage":"content"|"full","epochs":...,"seed":...,
 *               "hyper":{"alpha":10,"beta":1,"gamma":0.5},...}
 * init_checkpoint may be NULL (fresh start). history_csv may be NULL. */
dar_status dar_train_vae(const char* corpus_dir, const char* config_json,
                         const char* init_checkpoint, const char* out_checkpoint,
                         const char* history_csv, int overwrite);

/* config_json: {"mode":"disentangled"|"direct","generator_steps":...,...}
 * vae_checkpoint may be NULL in direct mode. */
dar_status dar_train_gan(const char* corpus_dir, const char* vae_checkpoint,
                         const char* config_json, const char* out_checkpoint,
                         const char* history_csv, int overwrite);

dar_status dar_eval_disentangle(const char* corpus_dir, const char* vae_checkpoint,
                                const char* out_csv, int overwrite);

/* levels_db: comma-separated negative dB values, e.g. "-60,-50,-40,-30,-20,-10". */
dar_status dar_eval_noise(const char* corpus_dir, const char* const* gan_checkpoints,
                          int num_checkpoints, const char* levels_db, const char* out_csv,
                          int overwrite);

/* noise_spec: "clean" or a negative dB value such as "-30".
 * sequence_id < 0 generates every held-out sequence of the checkpoint. */
dar_status dar_generate(const char* corpus_dir, const char* gan_checkpoint, int64_t sequence_id,
                        const char* noise_spec, const char* out_dir, int png_dump, int dump_real,
                        int overwrite);

/* Compares two video directories (videos.json format) pairwise by name. */
dar_status dar_metrics(const char* real_dir, const char* fake_dir, const char* out_csv,
                       int overwrite);

/* ---- metric primitives ---- */

/* 10*log10(max^2/MSE); +inf for identical inputs. */
dar_status dar_psnr(const float* a, const float* b, int64_t count, double max_value, double* out);
/* 8x8-window SSIM over an h-by-w image pair in [0,1]. */
dar_status dar_ssim(const float* a, const float* b, int64_t height, int64_t width, double* out);
/* Mean Euclidean landmark distance; inputs are [frames][landmarks][2] row-major. */
dar_status dar_lmd(const float* real_points, const float* fake_points, int64_t frames,
                   int64_t landmarks, double* out);

#ifdef __cplusplus
}
#endif

#endif /* DAR_DAR_H */

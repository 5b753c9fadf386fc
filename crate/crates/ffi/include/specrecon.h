#ifndef SPECRECON_H
#define SPECRECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_POINTER = 1,
  SR_STATUS_INVALID_ARGUMENT = 2,
  SR_STATUS_SHAPE = 3,
  SR_STATUS_FORMAT = 4,
  SR_STATUS_IO = 5,
  SR_STATUS_NUMERICAL = 6,
  SR_STATUS_PANIC = 7,
} SrStatus;

/*
 Hyperspectral cube: `bands` planes of `height × width` floats.
 */
typedef struct SrCube SrCube;

/*
 Trained or freshly initialised network parameters.
 */
typedef struct SrModel SrModel;

/*
 The six per-image error metrics.
 */
typedef struct SrMetrics {
  double rmse;
  double rrmse;
  double rmse_g;
  double rrmse_g;
  double rmse_g_uint8;
  double rrmse_g_uint8;
} SrMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 Valid until the next `sr_*` call on the same thread.
 */
const char *sr_last_error_message(void);

/*
 Library version, static storage.
 */
const char *sr_version(void);

/*
 Learning rate at `iter` for a step schedule decaying by `decay_factor`
 every `decay_every` iterations.
 */
double sr_lr_at(double lr0, double decay_factor, uint64_t decay_every, uint64_t iter);

/*
 Xavier-initialised model.

 # Safety
 `out` must be a valid pointer to writable storage for one handle.
 */
enum SrStatus sr_model_init(size_t n_res_blocks,
                            size_t n_features,
                            size_t n_bottleneck,
                            size_t out_channels,
                            uint64_t seed,
                            struct SrModel **out);

/*
 Loads the parameters of a checkpoint file.

 # Safety
 `path` must be a NUL-terminated string; `out` as in `sr_model_init`.
 */
enum SrStatus sr_model_load(const char *path, struct SrModel **out);

/*
 Writes the parameters (iteration 0, no optimizer state).

 # Safety
 `model` must be a live handle and `path` a NUL-terminated string.
 */
enum SrStatus sr_model_save(const struct SrModel *model, const char *path);

/*
 Number of predicted bands, 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t sr_model_out_channels(const struct SrModel *model);

/*
 Side of the receptive field (minimum input size), 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t sr_model_receptive_field(const struct SrModel *model);

/*
 # Safety
 `model` must be null or a handle not freed before.
 */
void sr_model_free(struct SrModel *model);

/*
 Full-resolution prediction from a planar `3 × height × width` RGB
 buffer. With `enhanced != 0` the eight rotated/flipped predictions are
 averaged.

 # Safety
 `rgb` must point to `3 * height * width` floats; `out` as in
 `sr_model_init`.
 */
enum SrStatus sr_predict(const struct SrModel *model,
                         const float *rgb,
                         size_t height,
                         size_t width,
                         int32_t enhanced,
                         struct SrCube **out);

/*
 Cube from caller buffers. `wavelengths` may be null for the default
 400 nm + 10 nm grid.

 # Safety
 `wavelengths` must be null or point to `bands` floats, `data` to
 `bands * height * width` floats.
 */
enum SrStatus sr_cube_new(size_t height,
                          size_t width,
                          size_t bands,
                          const float *wavelengths,
                          const float *data,
                          struct SrCube **out);

/*
 # Safety
 `path` must be a NUL-terminated string; `out` as in `sr_model_init`.
 */
enum SrStatus sr_cube_load(const char *path, struct SrCube **out);

/*
 # Safety
 `cube` must be a live handle and `path` a NUL-terminated string.
 */
enum SrStatus sr_cube_save(const struct SrCube *cube, const char *path);

/*
 # Safety
 `cube` must be a live handle; each output pointer may be null.
 */
enum SrStatus sr_cube_dims(const struct SrCube *cube, size_t *height, size_t *width, size_t *bands);

/*
 Borrowed pointer to the planar data (`bands * height * width` floats),
 valid while the handle lives. Null for a null handle.

 # Safety
 `cube` must be null or a live handle.
 */
const float *sr_cube_data(const struct SrCube *cube);

/*
 Borrowed pointer to the `bands` wavelengths in nm.

 # Safety
 `cube` must be null or a live handle.
 */
const float *sr_cube_wavelengths(const struct SrCube *cube);

/*
 # Safety
 `cube` must be null or a handle not freed before.
 */
void sr_cube_free(struct SrCube *cube);

/*
 RGB rendering under the CIE 1964 10° observer, max-normalised, written
 planar into `rgb_out` (`3 * height * width` floats).

 # Safety
 `cube` must be a live handle; `rgb_out` must hold `len` floats.
 */
enum SrStatus sr_synthesize_rgb(const struct SrCube *cube, float *rgb_out, size_t len);

/*
 All six metrics of `est` against `gt`.

 # Safety
 `est` and `gt` must be live handles; `out` must be writable.
 */
enum SrStatus sr_compute_metrics(const struct SrCube *est,
                                 const struct SrCube *gt,
                                 struct SrMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECRECON_H */

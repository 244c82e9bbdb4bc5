#ifndef SPARSEDEPTH_H
#define SPARSEDEPTH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Skip the pixel-wise refinement stage.
#define SD_NO_REFINE 1

// Skip graph propagation; unseeded segments take one global fit.
#define SD_NO_GRAPH 2

// Result of every fallible call.
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  // A required pointer argument was null.
  SD_STATUS_NULL_ARGUMENT = 1,
  // Malformed or inconsistent input (bad shape, bad value, bad file).
  SD_STATUS_INPUT = 2,
  // The solver failed to converge.
  SD_STATUS_NUMERICAL = 3,
  // Evaluation found no pixel inside the mask.
  SD_STATUS_EMPTY_MASK = 4,
  // A file could not be read or written.
  SD_STATUS_IO = 5,
  // The library panicked; this is a bug.
  SD_STATUS_PANIC = 6,
} SdStatus;

// Pipeline parameters.
typedef struct SdConfig SdConfig;

// Dense depth-like raster with a validity mask.
typedef struct SdGrid SdGrid;

// RGB image with intensities in [0, 1].
typedef struct SdImage SdImage;

// Sparse metric seeds.
typedef struct SdSeeds SdSeeds;

// Evaluation metrics, mirroring the library report.
typedef struct SdMetricReport {
  double rmse;
  double mae;
  double absrel;
  double sqrel;
  double delta1;
  double delta2;
  double delta3;
  double silog;
  uintptr_t valid_count;
  uintptr_t clamped;
} SdMetricReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or an empty string.
// The pointer stays valid until the next failing call on the same thread.
const char *sd_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sd_version(void);

// Create a grid from `height·width` row-major values. `valid` may be null
// (every finite value is valid); otherwise nonzero bytes mark valid pixels.
//
// # Safety
// `values` must point to `height·width` doubles and `valid`, when non-null,
// to as many bytes. `out` must be writable.
enum SdStatus sd_grid_new(uintptr_t height,
                          uintptr_t width,
                          const double *values,
                          const uint8_t *valid,
                          struct SdGrid **out);

// Read a PFM float map (with its optional no-data sidecar).
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SdStatus sd_grid_read_pfm(const char *path, struct SdGrid **out);

// Write a grid as PFM.
//
// # Safety
// `grid` must come from this library; `path` must be NUL-terminated.
enum SdStatus sd_grid_write_pfm(const struct SdGrid *grid, const char *path);

// Grid dimensions.
//
// # Safety
// `grid` must come from this library; `height` and `width` must be writable.
enum SdStatus sd_grid_shape(const struct SdGrid *grid, uintptr_t *height, uintptr_t *width);

// Copy values out in row-major order; invalid pixels read as NaN. `valid`
// may be null. `len` must equal `height·width`.
//
// # Safety
// `values` (and `valid` when non-null) must have room for `len` elements.
enum SdStatus sd_grid_copy(const struct SdGrid *grid,
                           double *values,
                           uint8_t *valid,
                           uintptr_t len);

// # Safety
// `grid` must be null or come from this library, and not be used again.
void sd_grid_free(struct SdGrid *grid);

// Create an image from `3·height·width` interleaved RGB doubles in [0, 1].
//
// # Safety
// `rgb` must point to `3·height·width` doubles; `out` must be writable.
enum SdStatus sd_image_new(uintptr_t height,
                           uintptr_t width,
                           const double *rgb,
                           struct SdImage **out);

// Read a binary PPM image.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum SdStatus sd_image_read_ppm(const char *path, struct SdImage **out);

// # Safety
// `image` must be null or come from this library, and not be used again.
void sd_image_free(struct SdImage *image);

// Create an empty seed set.
//
// # Safety
// `out` must be writable.
enum SdStatus sd_seeds_new(struct SdSeeds **out);

// Add a seed. Fails on a non-positive depth or a repeated pixel.
//
// # Safety
// `seeds` must come from this library.
enum SdStatus sd_seeds_push(struct SdSeeds *seeds, uintptr_t row, uintptr_t col, double depth);

// Number of seeds, or 0 for a null handle.
//
// # Safety
// `seeds` must be null or come from this library.
uintptr_t sd_seeds_len(const struct SdSeeds *seeds);

// Read a `row,col,depth` CSV seed file.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum SdStatus sd_seeds_read_csv(const char *path, struct SdSeeds **out);

// # Safety
// `seeds` must be null or come from this library, and not be used again.
void sd_seeds_free(struct SdSeeds *seeds);

// Default configuration.
//
// # Safety
// `out` must be writable.
enum SdStatus sd_config_new(struct SdConfig **out);

// Read a `key = value` configuration file.
//
// # Safety
// `path` must be NUL-terminated; `out` must be writable.
enum SdStatus sd_config_read(const char *path, struct SdConfig **out);

// Set one configuration key from its text form, e.g. `("knn", "6")`.
//
// # Safety
// `config` must come from this library; `key` and `value` must be
// NUL-terminated.
enum SdStatus sd_config_set(struct SdConfig *config, const char *key, const char *value);

// # Safety
// `config` must be null or come from this library, and not be used again.
void sd_config_free(struct SdConfig *config);

// Run the full pipeline and return the metric depth. `config` may be null
// for defaults; `flags` combines `SD_NO_REFINE` and `SD_NO_GRAPH`.
// `labels` may be null to segment the image internally; otherwise it holds
// one segment label per pixel in row-major order.
//
// # Safety
// Handles must come from this library; `labels`, when non-null, must point
// to `height·width` values; `out` must be writable.
enum SdStatus sd_run_pipeline(const struct SdImage *image,
                              const struct SdGrid *relative,
                              const struct SdSeeds *seeds,
                              const struct SdConfig *config,
                              const uint32_t *labels,
                              uint32_t flags,
                              struct SdGrid **out);

// Compare `pred` to `gt` over pixels with `gt ∈ (min_depth, max_depth]`.
//
// # Safety
// Handles must come from this library; `out` must be writable.
enum SdStatus sd_evaluate(const struct SdGrid *pred,
                          const struct SdGrid *gt,
                          double min_depth,
                          double max_depth,
                          struct SdMetricReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEDEPTH_H */

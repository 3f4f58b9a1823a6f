#ifndef LPSIFT_H
#define LPSIFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LpsStatus {
  LPS_STATUS_OK = 0,
  LPS_STATUS_NULL_POINTER = 1,
  LPS_STATUS_INVALID_ARGUMENT = 2,
  LPS_STATUS_IO = 3,
  LPS_STATUS_FORMAT = 4,
  LPS_STATUS_CONFIG = 5,
  LPS_STATUS_BOUNDARY = 6,
  LPS_STATUS_CONTRACT = 7,
  LPS_STATUS_DEGENERATE = 8,
  LPS_STATUS_REGISTRATION_FAILED = 9,
  LPS_STATUS_PANIC = 10,
} LpsStatus;

/**
 * Features and descriptors of one image.
 */
typedef struct LpsFeatures LpsFeatures;

/**
 * Loaded grayscale image.
 */
typedef struct LpsImage LpsImage;

/**
 * Correspondences between two feature sets.
 */
typedef struct LpsMatches LpsMatches;

/**
 * Pipeline parameters. Non-positive `alpha` or `beta0` select the
 * per-image defaults.
 */
typedef struct LpsConfig {
  double alpha;
  size_t window_min;
  size_t window_max;
  double beta0;
  size_t d;
  bool orientation;
  double delta_s;
  size_t ransac_iterations;
  double ransac_tol;
  size_t min_inliers;
  uint64_t seed;
} LpsConfig;

/**
 * A detected extremum. `polarity` is 1 for a maximum and -1 for a minimum.
 */
typedef struct LpsFeature {
  size_t row;
  size_t col;
  size_t scale;
  int32_t polarity;
  double value;
} LpsFeature;

/**
 * Reference position `(row1, col1)` and registered position `(row2, col2)`.
 */
typedef struct LpsMatch {
  double row1;
  double col1;
  double row2;
  double col2;
  double delta;
} LpsMatch;

/**
 * Rigid map from registered-image `(x, y)` to reference-image `(x, y)`,
 * with `x` the column.
 */
typedef struct LpsTransform {
  double theta;
  double tx;
  double ty;
} LpsTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *lps_last_error(void);

/**
 * Fills `out_cfg` with the library defaults.
 *
 * # Safety
 * `out_cfg` must be null or point to writable memory for an `LpsConfig`.
 */
enum LpsStatus lps_config_default(struct LpsConfig *out_cfg);

/**
 * Loads an image file and converts it to grayscale.
 *
 * # Safety
 * `file` must be a NUL-terminated string; `out_img` must be writable.
 */
enum LpsStatus lps_image_load(const char *file, struct LpsImage **out_img);

/**
 * Wraps a row-major 8-bit buffer of `rows * cols` bytes.
 *
 * # Safety
 * `data` must point to at least `rows * cols` readable bytes.
 */
enum LpsStatus lps_image_from_gray8(const uint8_t *data,
                                    size_t rows,
                                    size_t cols,
                                    struct LpsImage **out_img);

/**
 * # Safety
 * `img` must be a live handle; `rows` and `cols` must be writable.
 */
enum LpsStatus lps_image_dims(const struct LpsImage *img, size_t *rows, size_t *cols);

/**
 * # Safety
 * `img` must be null or a handle not yet freed.
 */
void lps_image_free(struct LpsImage *img);

/**
 * Detects features and computes their descriptors.
 *
 * # Safety
 * `img` and `cfg` must be valid; the out pointer must be writable.
 */
enum LpsStatus lps_features_compute(const struct LpsImage *img,
                                    const struct LpsConfig *cfg,
                                    struct LpsFeatures **out_feats);

/**
 * Number of features in the set; 0 for a null handle.
 *
 * # Safety
 * `feats` must be null or a live handle.
 */
size_t lps_features_count(const struct LpsFeatures *feats);

/**
 * # Safety
 * `feats` must be a live handle; the out pointer must be writable.
 */
enum LpsStatus lps_features_get(const struct LpsFeatures *feats,
                                size_t index,
                                struct LpsFeature *out_feat);

/**
 * Copies the descriptor of feature `index` into `buf`, which must hold
 * `len` values. `len` must equal the descriptor length (`8 * d * d`).
 *
 * # Safety
 * `feats` must be a live handle; `buf` must have room for `len` doubles.
 */
enum LpsStatus lps_features_descriptor(const struct LpsFeatures *feats,
                                       size_t index,
                                       double *buf,
                                       size_t len);

/**
 * # Safety
 * `feats` must be null or a handle not yet freed.
 */
void lps_features_free(struct LpsFeatures *feats);

/**
 * Matches the registered set against the reference set.
 *
 * # Safety
 * Handles and `cfg` must be valid; the out pointer must be writable.
 */
enum LpsStatus lps_match(const struct LpsFeatures *reference,
                         const struct LpsFeatures *registered,
                         const struct LpsConfig *cfg,
                         struct LpsMatches **out_matches);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t lps_matches_count(const struct LpsMatches *m);

/**
 * # Safety
 * `m` must be a live handle; the out pointer must be writable.
 */
enum LpsStatus lps_matches_get(const struct LpsMatches *m,
                               size_t index,
                               struct LpsMatch *out_match);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void lps_matches_free(struct LpsMatches *m);

/**
 * Fits a rigid transform to the matches with RANSAC. Returns
 * `REGISTRATION_FAILED` when too few inliers support any hypothesis.
 *
 * # Safety
 * `m` and `cfg` must be valid; `out_tf` and `inliers` must be writable.
 */
enum LpsStatus lps_register(const struct LpsMatches *m,
                            const struct LpsConfig *cfg,
                            struct LpsTransform *out_tf,
                            size_t *inliers);

/**
 * Stitches two image files and writes the composite as PNG. `out_tf` may
 * be null.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `cfg` must be valid.
 */
enum LpsStatus lps_stitch_files(const char *reference,
                                const char *registered,
                                const char *output,
                                const struct LpsConfig *cfg,
                                struct LpsTransform *out_tf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPSIFT_H */

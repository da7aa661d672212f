#ifndef CTSYNTH_H
#define CTSYNTH_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result codes. Zero is success.
typedef enum CtsStatus {
  CTS_STATUS_OK = 0,
  CTS_STATUS_UNSUPPORTED_ENCODING = 1,
  CTS_STATUS_MALFORMED_INPUT = 2,
  CTS_STATUS_INVALID_PARAMETER = 3,
  CTS_STATUS_DEGENERATE_DISTRIBUTION = 4,
  CTS_STATUS_NOT_POSITIVE_SEMIDEFINITE = 5,
  CTS_STATUS_INSUFFICIENT_SAMPLES = 6,
  CTS_STATUS_DEGENERATE_BASELINE = 7,
  CTS_STATUS_MISSING_FEATURE = 8,
  CTS_STATUS_DEGENERATE_TABLE = 9,
  CTS_STATUS_IO_ERROR = 10,
  CTS_STATUS_NULL_POINTER = 11,
  CTS_STATUS_INVALID_UTF8 = 12,
  CTS_STATUS_PANIC = 13,
} CtsStatus;

// A feature matrix loaded from a feature file.
typedef struct CtsFeatures CtsFeatures;

// A layered image set loaded from a manifest.
typedef struct CtsImageSet CtsImageSet;

// The outcome of an evaluation.
typedef struct CtsReport CtsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call on the same thread.
const char *ctsynth_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ctsynth_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void ctsynth_string_free(char *s);

// Loads a manifest and assigns axial layers, optionally from an overrides file.
//
// # Safety
// `manifest` must be a NUL-terminated path; `layers` may be NULL; `out` must be writable.
enum CtsStatus ctsynth_image_set_load(const char *manifest,
                                      const char *layers,
                                      struct CtsImageSet **out);

// Number of slices in the set, 0 for NULL.
//
// # Safety
// `set` must be NULL or a live handle.
size_t ctsynth_image_set_num_slices(const struct CtsImageSet *set);

// # Safety
// `set` must be NULL or a handle from [`ctsynth_image_set_load`] not yet freed.
void ctsynth_image_set_free(struct CtsImageSet *set);

// Loads a feature file and its sidecar.
//
// # Safety
// `path` must be a NUL-terminated path and `out` writable.
enum CtsStatus ctsynth_features_load(const char *path, struct CtsFeatures **out);

// Writes the row count and dimension of a feature matrix.
//
// # Safety
// `f` must be a live handle; `n` and `d` writable.
enum CtsStatus ctsynth_features_shape(const struct CtsFeatures *f, size_t *n, size_t *d);

// # Safety
// `f` must be NULL or a handle from [`ctsynth_features_load`] not yet freed.
void ctsynth_features_free(struct CtsFeatures *f);

// Fréchet distance between two Gaussians of dimension `d`. Means have `d`
// entries, covariances `d*d` row-major.
//
// # Safety
// Array arguments must hold the stated number of elements; `out` writable.
enum CtsStatus ctsynth_frechet_distance(size_t d,
                                        const double *mean1,
                                        const double *cov1,
                                        const double *mean2,
                                        const double *cov2,
                                        double eps,
                                        double *out);

// FID between two loaded feature matrices.
//
// # Safety
// Handles must be live; `out` writable.
enum CtsStatus ctsynth_fid(const struct CtsFeatures *real,
                           const struct CtsFeatures *synth,
                           double *out);

// KL divergence D(p‖q) in nats of two `n`-bin densities summing to 1.
//
// # Safety
// `p` and `q` must hold `n` values; `out` writable.
enum CtsStatus ctsynth_kl_divergence(const double *p,
                                     const double *q,
                                     size_t n,
                                     double epsilon,
                                     double *out);

// Pearson correlation of two `n`-bin densities.
//
// # Safety
// `a` and `b` must hold `n` values; `out` writable.
enum CtsStatus ctsynth_hist_correlation(const double *a, const double *b, size_t n, double *out);

// Intersection of two `n`-bin densities.
//
// # Safety
// `a` and `b` must hold `n` values; `out` writable.
enum CtsStatus ctsynth_hist_intersection(const double *a, const double *b, size_t n, double *out);

// Maps `len` calibrated values to 8-bit display levels for a window.
//
// # Safety
// `values` and `out` must hold `len` elements.
enum CtsStatus ctsynth_window(const float *values,
                              size_t len,
                              double center,
                              double width,
                              uint8_t *out);

// Pearson Chi-squared test of independence on a `rows` x `cols` table given row-major.
//
// # Safety
// `counts` must hold `rows*cols` values; outputs writable.
enum CtsStatus ctsynth_chi_squared(const uint64_t *counts,
                                   size_t rows,
                                   size_t cols,
                                   bool yates,
                                   double *statistic,
                                   size_t *dof,
                                   double *p_value);

// Layer-wise evaluation with default settings. `baseline`, `real_features`
// and `synth_features` may be NULL; features go together.
//
// # Safety
// Handles must be live or NULL where allowed; `out` writable.
enum CtsStatus ctsynth_evaluate(const struct CtsImageSet *real,
                                const struct CtsImageSet *synth,
                                const char *baseline,
                                const struct CtsFeatures *real_features,
                                const struct CtsFeatures *synth_features,
                                struct CtsReport **out);

// The report as JSON. Release with [`ctsynth_string_free`].
//
// # Safety
// `report` must be live; `out` writable.
enum CtsStatus ctsynth_report_json(const struct CtsReport *report, char **out);

// Writes report.json, scores.csv and the per-metric charts into `dir`.
//
// # Safety
// `report` must be live; `dir` a NUL-terminated path.
enum CtsStatus ctsynth_report_write(const struct CtsReport *report, const char *dir);

// # Safety
// `report` must be NULL or a handle from [`ctsynth_evaluate`] not yet freed.
void ctsynth_report_free(struct CtsReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTSYNTH_H */

#ifndef GLIME_H
#define GLIME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GlimeStatus {
  GLIME_STATUS_OK = 0,
  GLIME_STATUS_NULL_POINTER = 1,
  GLIME_STATUS_INVALID_UTF8 = 2,
  GLIME_STATUS_INVALID_ARGUMENT = 3,
  GLIME_STATUS_DIMENSION_MISMATCH = 4,
  GLIME_STATUS_SINGULAR_SYSTEM = 5,
  GLIME_STATUS_UNSUPPORTED = 6,
  GLIME_STATUS_REMOTE = 7,
  GLIME_STATUS_IO = 8,
  GLIME_STATUS_INTERNAL = 99,
} GlimeStatus;

/**
 * Explanation method selector.
 */
typedef enum GlimeMethod {
  GLIME_METHOD_LIME = 0,
  GLIME_METHOD_LIME_UNWEIGHTED = 1,
  GLIME_METHOD_GLIME_BINOMIAL = 2,
  GLIME_METHOD_GLIME_GAUSS = 3,
  GLIME_METHOD_GLIME_LAPLACE = 4,
  GLIME_METHOD_GLIME_UNIFORM = 5,
  GLIME_METHOD_KERNEL_SHAP = 6,
  GLIME_METHOD_KERNEL_SHAP_SAMPLED = 7,
  GLIME_METHOD_SMOOTH_GRAD = 8,
} GlimeMethod;

typedef struct GlimeExplanation GlimeExplanation;

typedef struct GlimeModel GlimeModel;

typedef struct GlimeSegmentation GlimeSegmentation;

/**
 * Parameters of [`glime_explain`]. `sigma` is ignored by KernelSHAP and
 * `lambda` by KernelSHAP and SmoothGrad.
 */
typedef struct GlimeExplainParams {
  /**
   * A [`GlimeMethod`] value.
   */
  uint32_t method;
  double sigma;
  size_t n;
  double lambda;
  uint64_t seed;
} GlimeExplainParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *glime_last_error_message(void);

/**
 * Parses a model description (the JSON accepted by the CLI configs).
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum GlimeStatus glime_model_from_json(const char *json, struct GlimeModel **out);

/**
 * # Safety
 * `model` must come from [`glime_model_from_json`] or be null.
 */
void glime_model_free(struct GlimeModel *model);

/**
 * Input dimension of the model; 0 when a remote model does not declare one.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
size_t glime_model_input_dim(const struct GlimeModel *model);

/**
 * Evaluates `n_points` row-major points of width `dim` into `out[n_points]`.
 *
 * # Safety
 * `points` must hold `n_points * dim` values and `out` `n_points` slots.
 */
enum GlimeStatus glime_model_evaluate(const struct GlimeModel *model,
                                      const double *points,
                                      size_t n_points,
                                      size_t dim,
                                      double *out);

/**
 * One feature per raw coordinate.
 *
 * # Safety
 * `out` must be writable.
 */
enum GlimeStatus glime_segmentation_singleton(size_t len, struct GlimeSegmentation **out);

/**
 * Regular `rows x cols` grid over an HWC image.
 *
 * # Safety
 * `out` must be writable.
 */
enum GlimeStatus glime_segmentation_grid(size_t height,
                                         size_t width,
                                         size_t channels,
                                         size_t rows,
                                         size_t cols,
                                         struct GlimeSegmentation **out);

/**
 * Explicit map from raw index to feature id; ids must cover `0..d`.
 *
 * # Safety
 * `assignment` must hold `len` values; `out` must be writable.
 */
enum GlimeStatus glime_segmentation_from_assignment(const size_t *assignment,
                                                    size_t len,
                                                    struct GlimeSegmentation **out);

/**
 * # Safety
 * `seg` must come from a `glime_segmentation_*` constructor or be null.
 */
void glime_segmentation_free(struct GlimeSegmentation *seg);

/**
 * Number of interpretable features `d`; 0 for a null handle.
 *
 * # Safety
 * `seg` must be a live handle or null.
 */
size_t glime_segmentation_num_features(const struct GlimeSegmentation *seg);

/**
 * Explains `model` at `x[x_len]`. `reference` may be null for the
 * continuous methods; binary methods need `x_len` reference values.
 *
 * # Safety
 * Handles must be live; `x` and a non-null `reference` must hold `x_len`
 * values; `params` and `out` must be valid pointers.
 */
enum GlimeStatus glime_explain(const struct GlimeModel *model,
                               const struct GlimeSegmentation *seg,
                               const double *x,
                               size_t x_len,
                               const double *reference,
                               const struct GlimeExplainParams *params,
                               struct GlimeExplanation **out);

/**
 * # Safety
 * `e` must come from [`glime_explain`] or be null.
 */
void glime_explanation_free(struct GlimeExplanation *e);

/**
 * Length of the attribution vector; 0 for a null handle.
 *
 * # Safety
 * `e` must be a live handle or null.
 */
size_t glime_explanation_dim(const struct GlimeExplanation *e);

/**
 * Copies the attributions into `out[len]`; `len` must equal the dimension.
 *
 * # Safety
 * `e` must be live and `out` must hold `len` values.
 */
enum GlimeStatus glime_explanation_weights(const struct GlimeExplanation *e,
                                           double *out,
                                           size_t len);

/**
 * Surrogate intercept; NaN for a null handle.
 *
 * # Safety
 * `e` must be a live handle or null.
 */
double glime_explanation_intercept(const struct GlimeExplanation *e);

/**
 * Weighted R^2 of the fit; NaN when the method has none (SmoothGrad).
 *
 * # Safety
 * `e` must be a live handle or null.
 */
double glime_explanation_r2(const struct GlimeExplanation *e);

/**
 * JSON record of the explanation; release with [`glime_string_free`].
 * Null for a null handle.
 *
 * # Safety
 * `e` must be a live handle or null.
 */
char *glime_explanation_to_json(const struct GlimeExplanation *e);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void glime_string_free(char *s);

/**
 * Probability that a Binomial mask over `d` features has `k` ones.
 *
 * # Safety
 * `out` must be writable.
 */
enum GlimeStatus glime_binomial_pmf(size_t d, double sigma, size_t k, double *out);

/**
 * Exponential-kernel weight of a mask with `k` of `d` features kept.
 *
 * # Safety
 * `out` must be writable.
 */
enum GlimeStatus glime_kernel_weight(size_t d, size_t k, double sigma, double *out);

/**
 * Coefficients of `(alpha1 + lambda - alpha2) I + alpha2 11^T` inverted:
 * the inverse is `beta1` on the diagonal and `beta2` elsewhere.
 *
 * # Safety
 * `beta1` and `beta2` must be writable.
 */
enum GlimeStatus glime_sherman_morrison(double alpha1,
                                        double alpha2,
                                        double lambda,
                                        size_t d,
                                        double *beta1,
                                        double *beta2);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLIME_H */

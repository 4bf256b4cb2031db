#ifndef POAM_H
#define POAM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PoamStatus {
  POAM_STATUS_OK = 0,
  POAM_STATUS_NULL_POINTER = 1,
  POAM_STATUS_INVALID_ARGUMENT = 2,
  POAM_STATUS_NUMERICAL = 3,
  POAM_STATUS_IO = 4,
  POAM_STATUS_PANIC = 5,
} PoamStatus;

/*
 Opaque model handle.
 */
typedef struct PoamModel PoamModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Creates a model. `method` is a method name such as `"poam"`;
 `config_json` is an optional JSON object of EM settings (may be null).

 # Safety
 String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum PoamStatus poam_model_create(const char *method,
                                  size_t input_dim,
                                  const char *config_json,
                                  uint64_t seed,
                                  struct PoamModel **out);

/*
 Fits the normalizer on the pilot data and runs the first update.

 # Safety
 `x` must hold `n * input_dim` doubles and `y` `n` doubles.
 */
enum PoamStatus poam_model_pilot(struct PoamModel *model,
                                 const double *x,
                                 const double *y,
                                 size_t n);

/*
 One E-step and M-step on a batch of raw observations.

 # Safety
 As for [`poam_model_pilot`].
 */
enum PoamStatus poam_model_update(struct PoamModel *model,
                                  const double *x,
                                  const double *y,
                                  size_t n);

/*
 Predictive mean and variance at `n` raw inputs. With `include_noise`
 nonzero the variance is that of a new observation, otherwise of the
 latent field.

 # Safety
 `x` must hold `n * input_dim` doubles; `mean` and `var` `n` writable
 doubles each.
 */
enum PoamStatus poam_model_predict(const struct PoamModel *model,
                                   const double *x,
                                   size_t n,
                                   int32_t include_noise,
                                   double *mean,
                                   double *var);

/*
 Current number of inducing points.

 # Safety
 `out` must be writable.
 */
enum PoamStatus poam_model_num_inducing(const struct PoamModel *model, size_t *out);

/*
 # Safety
 `path` must be a NUL-terminated string.
 */
enum PoamStatus poam_model_save(const struct PoamModel *model, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
enum PoamStatus poam_model_load(const char *path, struct PoamModel **out);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must come from this library and not be used afterwards.
 */
void poam_model_free(struct PoamModel *model);

/*
 Message for the last failed call on this thread, or null. The pointer is
 valid until the next call into this library on the same thread.
 */
const char *poam_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POAM_H */

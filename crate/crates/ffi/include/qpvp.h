#ifndef QPVP_H
#define QPVP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum QpvpStatus {
  QPVP_STATUS_OK = 0,
  QPVP_STATUS_NULL_POINTER = 1,
  QPVP_STATUS_INVALID_ARGUMENT = 2,
  QPVP_STATUS_NUMERIC = 3,
  QPVP_STATUS_UNSUPPORTED = 4,
  QPVP_STATUS_PARSE = 5,
  QPVP_STATUS_PANIC = 6,
} QpvpStatus;

// A driving process.
typedef struct QpvpDriver QpvpDriver;

// Simulated paths, stored row-major (one row per path).
typedef struct QpvpEnsemble QpvpEnsemble;

// A quantile family with its parameters.
typedef struct QpvpQuantile QpvpQuantile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call on the same thread.
const char *qpvp_last_error(void);

// Library version as a static NUL-terminated string.
const char *qpvp_version(void);

// Tukey g-and-h quantile `A + (B/g)(e^{gX} − 1)e^{hX²/2}` (`h = 0` gives Tukey-g).
//
// # Safety
// `out` must be a valid pointer to writable handle storage.
enum QpvpStatus qpvp_quantile_tukey_gh(double a,
                                       double b,
                                       double g,
                                       double h,
                                       struct QpvpQuantile **out);

// Gaussian quantile `m + √v X`.
//
// # Safety
// `out` must be a valid pointer to writable handle storage.
enum QpvpStatus qpvp_quantile_gaussian(double m, double v, struct QpvpQuantile **out);

// Evaluate the quantile at level `u ∈ [0, 1]` and time `t`.
//
// # Safety
// `q` must be a live handle and `out` a valid pointer.
enum QpvpStatus qpvp_quantile_eval(const struct QpvpQuantile *q, double t, double u, double *out);

// # Safety
// `q` must be null or a handle not yet freed.
void qpvp_quantile_free(struct QpvpQuantile *q);

// Largest level where two quantiles cross at time `t`.
//
// `u` receives the level (NaN if the curves coincide), `z` the common
// value there, and `upper` 1 or 2 for the curve above the crossing, 0 if
// they coincide.
//
// # Safety
// `q1`, `q2` must be live handles and the out pointers valid.
enum QpvpStatus qpvp_crossing_u_star(const struct QpvpQuantile *q1,
                                     const struct QpvpQuantile *q2,
                                     double t,
                                     double *u,
                                     double *z,
                                     int32_t *upper);

// Driver from its JSON description, e.g.
// `{"kind":"ou","theta":0.5,"mu":0.3,"sigma":0.4,"y0":0.1}`.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum QpvpStatus qpvp_driver_from_json(const char *json, struct QpvpDriver **out);

// # Safety
// `d` must be null or a handle not yet freed.
void qpvp_driver_free(struct QpvpDriver *d);

// Simulate `n_paths` paths observed at the `n_times` increasing positive
// times in `times`.
//
// # Safety
// `driver` must be a live handle, `times` must point to `n_times` doubles
// and `out` must be valid.
enum QpvpStatus qpvp_simulate(const struct QpvpDriver *driver,
                              const double *times,
                              size_t n_times,
                              size_t n_paths,
                              uint64_t seed,
                              struct QpvpEnsemble **out);

// # Safety
// `e` must be a live handle and the out pointers valid.
enum QpvpStatus qpvp_ensemble_shape(const struct QpvpEnsemble *e, size_t *n_paths, size_t *n_times);

// Copy the paths row-major into `buf`, which must hold
// `n_paths * n_times` doubles.
//
// # Safety
// `e` must be a live handle and `buf` must point to `len` writable doubles.
enum QpvpStatus qpvp_ensemble_copy(const struct QpvpEnsemble *e, double *buf, size_t len);

// # Safety
// `e` must be null or a handle not yet freed.
void qpvp_ensemble_free(struct QpvpEnsemble *e);

// Price a valuation request given as JSON (the `ValuationRequest` schema).
//
// # Safety
// `request_json` must be a NUL-terminated string; the out pointers valid.
enum QpvpStatus qpvp_price_json(const char *request_json, double *price, double *std_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPVP_H */

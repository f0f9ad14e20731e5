#ifndef FRENGATE_H
#define FRENGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FRG_OK 0

#define FRG_ERR_IO 1

#define FRG_ERR_CONFIG 2

#define FRG_ERR_DOMAIN 3

#define FRG_ERR_CONVERGENCE 4

#define FRG_ERR_NULL -1

#define FRG_ERR_PANIC -2

#define FRG_ERR_BUFFER -3

/**
 * Opaque decay trajectory.
 */
typedef struct FrgDecay FrgDecay;

/**
 * Opaque scattering result.
 */
typedef struct FrgScatter FrgScatter;

/**
 * Opaque Schmidt spectrum.
 */
typedef struct FrgSchmidt FrgSchmidt;

/**
 * Physical parameters in units of ω_2X.
 */
typedef struct FrgParams {
  double omega_2x;
  double omega_x;
  double delta_x;
  double s;
  double gamma;
  double d;
  double omega_e;
  double omega_b;
  double tau;
} FrgParams;

typedef int32_t FrgStatus;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to `len`).
 * Returns the full message length in bytes.
 */
size_t frg_last_error(char *buf, size_t len);

struct FrgParams frg_params_default(void);

/**
 * 3r/(2(1+r²)).
 */
double frg_success_probability_analytic(double ratio);

/**
 * Gaussian input (width `alpha`) through an isotropic Gaussian coupling of width `beta`
 * on a `points`² grid of half-width `half_width` around (ω_e, ω_b).
 */
FrgStatus frg_scatter_gaussian(const struct FrgParams *params,
                               double alpha,
                               double beta,
                               double half_width,
                               size_t points,
                               struct FrgScatter **out);

void frg_scatter_free(struct FrgScatter *handle);

FrgStatus frg_scatter_probability(const struct FrgScatter *handle, uint32_t ch, double *out);

FrgStatus frg_scatter_success(const struct FrgScatter *handle, double *out);

/**
 * Number of grid samples per channel field.
 */
size_t frg_scatter_field_len(const struct FrgScatter *handle);

/**
 * Copies one channel field (row-major over ω, then ω′) into `re` and `im`.
 */
FrgStatus frg_scatter_field(const struct FrgScatter *handle,
                            uint32_t ch,
                            double *re,
                            double *im,
                            size_t len);

/**
 * Grid-SVD Schmidt spectrum of one channel.
 */
FrgStatus frg_schmidt_from_scatter(const struct FrgScatter *handle,
                                   uint32_t ch,
                                   struct FrgSchmidt **out);

void frg_schmidt_free(struct FrgSchmidt *handle);

double frg_schmidt_number(const struct FrgSchmidt *handle);

double frg_schmidt_entropy(const struct FrgSchmidt *handle);

/**
 * Copies up to `len` Schmidt coefficients, largest first; `written` receives the count.
 */
FrgStatus frg_schmidt_lambdas(const struct FrgSchmidt *handle,
                              double *buf,
                              size_t len,
                              size_t *written);

/**
 * Runs a decay preset ("adiabatic" or "resonant"); `n_freq` = 0 keeps the preset size
 * and a NaN `g0` keeps the preset coupling.
 */
FrgStatus frg_decay_preset(const char *preset,
                           size_t n_freq,
                           double g0,
                           double t_max,
                           struct FrgDecay **out);

void frg_decay_free(struct FrgDecay *handle);

size_t frg_decay_len(const struct FrgDecay *handle);

/**
 * Copies t, P_0, P_X and P_2X samples; any output pointer may be null.
 */
FrgStatus frg_decay_samples(const struct FrgDecay *handle,
                            double *t,
                            double *p0,
                            double *px,
                            double *p2x,
                            size_t len);

/**
 * Fitted P_2X decay rate, or NaN when the fit was rejected.
 */
double frg_decay_rate(const struct FrgDecay *handle);

double frg_decay_max_px(const struct FrgDecay *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRENGATE_H */

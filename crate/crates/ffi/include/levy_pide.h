#ifndef LEVY_PIDE_H
#define LEVY_PIDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_UTF8 = 2,
  LP_STATUS_PARAMETER_DOMAIN = 3,
  LP_STATUS_TOLERANCE_NOT_MET = 4,
  LP_STATUS_NO_SOLUTION = 5,
  LP_STATUS_OUT_OF_DOMAIN = 6,
  LP_STATUS_PLAN_INVALID = 7,
  LP_STATUS_SINGULARITY = 8,
  LP_STATUS_GRID_MISMATCH = 9,
  LP_STATUS_BLOW_UP = 10,
  LP_STATUS_STARTUP_GRADING = 11,
  LP_STATUS_UNSUPPORTED = 12,
  LP_STATUS_CONFIG = 13,
  LP_STATUS_IO = 14,
  LP_STATUS_PANIC = 15,
  LP_STATUS_BUFFER_TOO_SMALL = 16,
} LpStatus;

/**
 * Jump measure handle.
 */
typedef struct LpMeasure LpMeasure;

/**
 * Configured pricing run handle.
 */
typedef struct LpPricer LpPricer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *lp_status_string(enum LpStatus status);

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated) and stores its length without the terminator in `len_out`.
 * Returns `BufferTooSmall` if `cap` cannot hold the message.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes; `len_out` may be null.
 */
enum LpStatus lp_last_error_message(char *buf, uintptr_t cap, uintptr_t *len_out);

/**
 * Black–Scholes price of a European option.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum LpStatus lp_bs_price(double spot,
                          double strike,
                          double maturity,
                          double rate,
                          double sigma,
                          int32_t is_call,
                          double *out);

/**
 * Merton jump-diffusion price by the Poisson series with at least
 * `terms` terms.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum LpStatus lp_merton_series(double spot,
                               double strike,
                               double maturity,
                               double rate,
                               double sigma,
                               int32_t is_call,
                               double lambda,
                               double jump_mean,
                               double jump_std,
                               uintptr_t terms,
                               double *out);

/**
 * Bessel-potential kernel `G_order` at the point `x` of dimension `dim`.
 *
 * # Safety
 * `x` must point to `dim` doubles and `out` to one writable double.
 */
enum LpStatus lp_bessel_kernel(double order, uintptr_t dim, const double *x, double *out);

/**
 * Merton measure with intensity `lambda` and Gaussian jumps `N(m, δ²)`.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle to free
 * with [`lp_measure_free`].
 */
enum LpStatus lp_measure_merton(double lambda,
                                double jump_mean,
                                double jump_std,
                                struct LpMeasure **out);

/**
 * Kou double-exponential measure.
 *
 * # Safety
 * As [`lp_measure_merton`].
 */
enum LpStatus lp_measure_kou(double lambda,
                             double p_up,
                             double eta_up,
                             double eta_down,
                             struct LpMeasure **out);

/**
 * `∫(e^z - 1 - z) ν(dz)` for the measure.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum LpStatus lp_measure_delta(const struct LpMeasure *m, double *out);

/**
 * Density `h(z)` of a one-dimensional measure.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum LpStatus lp_measure_density(const struct LpMeasure *m, double z, double *out);

/**
 * Releases a measure handle; null is ignored.
 *
 * # Safety
 * `m` must come from an `lp_measure_*` constructor and not be used again.
 */
void lp_measure_free(struct LpMeasure *m);

/**
 * Parses a TOML run configuration (NUL-terminated UTF-8).
 *
 * # Safety
 * `config` must be a valid C string and `out` a valid pointer; free the
 * handle with [`lp_pricer_free`].
 */
enum LpStatus lp_pricer_from_config(const char *config, struct LpPricer **out);

/**
 * Solves the configured problem and writes `V(0, S₀)`.
 *
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum LpStatus lp_pricer_price(const struct LpPricer *p, double *out);

/**
 * Closed-form or series reference for the configuration. Writes NaN and
 * returns `Unsupported` when no reference exists.
 *
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum LpStatus lp_pricer_oracle(const struct LpPricer *p, double *out);

/**
 * Releases a pricer handle; null is ignored.
 *
 * # Safety
 * `p` must come from [`lp_pricer_from_config`] and not be used again.
 */
void lp_pricer_free(struct LpPricer *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEVY_PIDE_H */

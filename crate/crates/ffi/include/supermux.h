#ifndef SUPERMUX_H
#define SUPERMUX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SMX_OK 0

#define SMX_ERR_NULL -1

#define SMX_ERR_INVALID -2

#define SMX_ERR_DIMENSION -3

#define SMX_ERR_NONCONVERGENCE -4

#define SMX_ERR_RESOURCE -5

#define SMX_ERR_PARSE -6

#define SMX_ERR_IO -7

#define SMX_ERR_PANIC -99

#define SMX_SCHEME_ALG1 0

#define SMX_SCHEME_ALG2 1

#define SMX_SCHEME_UO 2

#define SMX_SCHEME_MO 3

#define SMX_SCHEME_OM 4

#define SMX_MODE_OFF 0

#define SMX_MODE_UNICAST_ONLY 1

#define SMX_MODE_MULTICAST_ONLY 2

#define SMX_MODE_SUPERPOSITION 3

/**
 * Ergodic rate estimator for one MIMO shape.
 */
typedef struct SmxEstimator SmxEstimator;

/**
 * Channel statistics: per-subchannel user SNRs with uniform subchannel widths.
 */
typedef struct SmxStats SmxStats;

/**
 * Rates of an allocation.
 */
typedef struct SmxRates {
  /**
   * Multicast rate `R₀`.
   */
  double r0;
  /**
   * `K·R₀ + Σ Rₖ`.
   */
  double sum_rate;
  /**
   * `μ·R₀ + Σ Rₖ`.
   */
  double wsr;
} SmxRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *smx_last_error(void);

/**
 * Creates a rate estimator for an `n_t × n_r` channel from `n_samples`
 * Monte-Carlo draws. With `lookup != 0` rates come from a precomputed table
 * (fast, interpolated); otherwise every call averages over the samples.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
int32_t smx_estimator_new(uint32_t n_t,
                          uint32_t n_r,
                          uint64_t n_samples,
                          uint64_t seed,
                          int32_t lookup,
                          struct SmxEstimator **out);

/**
 * Releases an estimator. Null is ignored.
 *
 * # Safety
 * `est` must be null or a handle from [`smx_estimator_new`] not yet freed.
 */
void smx_estimator_free(struct SmxEstimator *est);

/**
 * `Φ(x) = E log₂ det(I + (x/n_T)·HH†)`.
 *
 * # Safety
 * `est` must be a live estimator handle and `out` writable.
 */
int32_t smx_phi_capacity(const struct SmxEstimator *est, double x, double *out);

/**
 * `φ(x)`, the normalised derivative of `Φ` (equal to 1 at `x = 0`).
 *
 * # Safety
 * `est` must be a live estimator handle and `out` writable.
 */
int32_t smx_phi_aux(const struct SmxEstimator *est, double x, double *out);

/**
 * Builds channel statistics from `m × k` linear SNRs, row-major with one
 * row per subchannel. Subchannels get equal bandwidth shares.
 *
 * # Safety
 * `snr` must point to `m * k` readable doubles and `out` must be writable.
 */
int32_t smx_stats_new(const double *snr, size_t m, size_t k, struct SmxStats **out);

/**
 * Releases channel statistics. Null is ignored.
 *
 * # Safety
 * `stats` must be null or a handle from [`smx_stats_new`] not yet freed.
 */
void smx_stats_free(struct SmxStats *stats);

/**
 * Number of subchannels and users of `stats`.
 *
 * # Safety
 * `stats` must be a live handle; `m` and `k` must be writable.
 */
int32_t smx_stats_dims(const struct SmxStats *stats, size_t *m, size_t *k);

/**
 * Reference surrogate slope `α` for an `n_t × n_r` channel. Shapes missing
 * from the reference table are fitted on the fly with `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
int32_t smx_reference_alpha(uint32_t n_t, uint32_t n_r, uint64_t seed, double *out);

/**
 * Allocates power budget `p_t` with `scheme` (an `SMX_SCHEME_*` code) for
 * total multicast weight `mu` and surrogate slope `alpha`. Each per-subchannel
 * output is optional (may be null) and otherwise receives `M` values:
 * total power, unicast power and mode (`SMX_MODE_*`). `rates` is optional.
 *
 * # Safety
 * Handles must be live; non-null outputs must hold `M` elements.
 */
int32_t smx_allocate(const struct SmxStats *stats,
                     const struct SmxEstimator *est,
                     int32_t scheme,
                     double mu,
                     double p_t,
                     double alpha,
                     double *p_total_out,
                     double *p1_out,
                     int32_t *mode_out,
                     struct SmxRates *rates);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUPERMUX_H */

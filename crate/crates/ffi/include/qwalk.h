#ifndef QWALK_H
#define QWALK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum QwStatus {
  QW_STATUS_OK = 0,
  QW_STATUS_NULL_POINTER = 1,
  QW_STATUS_INVALID_ARGUMENT = 2,
  QW_STATUS_NOT_TRACE_PRESERVING = 3,
  QW_STATUS_NOT_UNITARY_SUM = 4,
  QW_STATUS_COST_GUARD = 5,
  QW_STATUS_NO_CONVERGENCE = 6,
  QW_STATUS_NON_UNIQUE = 7,
  QW_STATUS_BUFFER_TOO_SMALL = 8,
  QW_STATUS_INTERNAL = 9,
} QwStatus;

typedef enum QwWalk {
  QW_WALK_OPEN = 0,
  QW_WALK_UNITARY = 1,
} QwWalk;

typedef enum QwVerdict {
  QW_VERDICT_RECURRENT = 0,
  QW_VERDICT_TRANSIENT_FOR_SOME_DENSITY = 1,
  QW_VERDICT_INCONCLUSIVE = 2,
} QwVerdict;

/**
 * Opaque coin pair.
 */
typedef struct QwCoin QwCoin;

/**
 * Opaque finite site walk.
 */
typedef struct QwSiteWalk QwSiteWalk;

typedef struct QwComplex {
  double re;
  double im;
} QwComplex;

typedef struct QwCoinFlags {
  bool trace_preserving;
  bool unital;
  bool unitary_sum;
  bool left_normal;
  bool right_normal;
  bool pq;
} QwCoinFlags;

typedef struct QwCriteria {
  enum QwVerdict verdict;
  /**
   * Eigenvalues of `L*L`, ascending.
   */
  double lstar_l[2];
  /**
   * Eigenvalues of `R*R`, ascending.
   */
  double rstar_r[2];
  double singular_lower;
  double singular_upper;
  bool pq;
} QwCriteria;

typedef struct QwKacReport {
  double expected_return_time;
  double stationary_trace;
  double gap;
  double product;
  double tail_mass;
  double return_probability;
  double return_density_deviation;
} QwKacReport;

/**
 * Library version as a static NUL-terminated string.
 */
const char *qw_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL;
 * 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qw_last_error_message(char *buf, size_t len);

/**
 * Build a coin from row-major `left[4]` and `right[4]`.
 *
 * # Safety
 * `left` and `right` point to 4 entries each; `out` is writable.
 */
enum QwStatus qw_coin_new(const struct QwComplex *left,
                          const struct QwComplex *right,
                          struct QwCoin **out_coin);

/**
 * Preset by name (`hadamard`, `bitflip`, `sec7`, `diag-trichotomy`).
 * `p` is read only by `bitflip`.
 *
 * # Safety
 * `name` is a NUL-terminated string; `out_coin` is writable.
 */
enum QwStatus qw_coin_preset(const char *name, double p, struct QwCoin **out_coin);

/**
 * # Safety
 * `coin` is null or a live handle not freed before.
 */
void qw_coin_free(struct QwCoin *coin);

/**
 * # Safety
 * `coin` is a live handle; `out_flags` is writable.
 */
enum QwStatus qw_coin_flags(const struct QwCoin *coin, struct QwCoinFlags *out_flags);

/**
 * Monitored first-return probabilities at the origin. Writes
 * `horizon + 1` values (`out[0] = 0`).
 *
 * # Safety
 * `state` has `state_len` entries; `out` has `out_len` writable slots.
 */
enum QwStatus qw_first_return_series(const struct QwCoin *coin,
                                     enum QwWalk walk,
                                     const struct QwComplex *state,
                                     size_t state_len,
                                     size_t horizon,
                                     double *out_terms,
                                     size_t out_len);

/**
 * Open-walk first-return probability at step `2k` by path enumeration.
 *
 * # Safety
 * `density` has 4 entries; `out_value` is writable.
 */
enum QwStatus qw_first_return_exact(const struct QwCoin *coin,
                                    const struct QwComplex *density,
                                    size_t k,
                                    double *out_value);

/**
 * Unmonitored probability of being at the origin, steps `0..=horizon`.
 *
 * # Safety
 * As [`qw_first_return_series`].
 */
enum QwStatus qw_unmonitored_p0(const struct QwCoin *coin,
                                enum QwWalk walk,
                                const struct QwComplex *state,
                                size_t state_len,
                                size_t horizon,
                                double *out_terms,
                                size_t out_len);

/**
 * `p₀(n)` by periodic quadrature of the channel symbol on `nodes` points.
 *
 * # Safety
 * `density` has 4 entries; `out_value` is writable.
 */
enum QwStatus qw_p0_quadrature(const struct QwCoin *coin,
                               const struct QwComplex *density,
                               size_t n,
                               size_t nodes,
                               double *out_value);

/**
 * Site distribution after `time` steps from the origin. Writes `2·time + 1`
 * values; index `i` is site `i - time`.
 *
 * # Safety
 * As [`qw_first_return_series`].
 */
enum QwStatus qw_site_distribution(const struct QwCoin *coin,
                                   enum QwWalk walk,
                                   const struct QwComplex *state,
                                   size_t state_len,
                                   size_t time,
                                   double *out_probs,
                                   size_t out_len);

/**
 * Closed-form recurrence verdict.
 *
 * # Safety
 * `coin` is a live handle; `out_criteria` is writable.
 */
enum QwStatus qw_criteria(const struct QwCoin *coin, struct QwCriteria *out_criteria);

/**
 * Site walk from JSON `{sites, dim, transitions: [{from, to, matrix}]}`.
 *
 * # Safety
 * `json` is NUL-terminated; `out_walk` is writable.
 */
enum QwStatus qw_sitewalk_from_json(const char *json, struct QwSiteWalk **out_walk);

/**
 * Half-line barrier walk truncated at `last_site`.
 *
 * # Safety
 * `out_walk` is writable.
 */
enum QwStatus qw_sitewalk_barrier(double p11,
                                  double p22,
                                  size_t last_site,
                                  bool retaining,
                                  struct QwSiteWalk **out_walk);

/**
 * # Safety
 * `walk` is null or a live handle not freed before.
 */
void qw_sitewalk_free(struct QwSiteWalk *walk);

/**
 * Expected return time to `x` from `rho_x` (dim × dim, row-major) against
 * the stationary trace at `x`.
 *
 * # Safety
 * `rho_x` has `rho_len` entries; `out_report` is writable.
 */
enum QwStatus qw_kac_check(const struct QwSiteWalk *walk,
                           const struct QwComplex *rho_x,
                           size_t rho_len,
                           size_t x,
                           size_t horizon,
                           struct QwKacReport *out_report);

/**
 * Leading symbol eigenvalue of the unital non-normal preset at momentum `k`.
 */
double qw_non_normal_lambda1(double k);

#endif  /* QWALK_H */

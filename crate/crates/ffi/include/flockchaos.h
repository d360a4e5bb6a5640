#ifndef FLOCKCHAOS_H
#define FLOCKCHAOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_DOMAIN = 1,
  FC_STATUS_CONFIG = 2,
  FC_STATUS_CONTRACT = 3,
  FC_STATUS_NUMERICAL = 4,
  FC_STATUS_IO = 5,
  FC_STATUS_NULL_POINTER = 6,
  FC_STATUS_PANIC = 7,
} FcStatus;

/**
 * Monte Carlo chaos aggregate handle.
 */
typedef struct FcAggregate FcAggregate;

/**
 * Particle ensemble handle.
 */
typedef struct FcEnsemble FcEnsemble;

/**
 * Communication kernel handle.
 */
typedef struct FcKernel FcKernel;

/**
 * Self-propulsion parameters, passed by value.
 */
typedef struct FcForceParams {
  double sigma;
  double p;
  double kappa;
} FcForceParams;

/**
 * One row of a chaos aggregate.
 */
typedef struct FcAggregateRow {
  double t;
  double p_mean;
  double k_mean;
  double c_mean;
  double total_mean;
  double total_stderr;
  uintptr_t trials;
} FcAggregateRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to `len − 1` bytes) into `buf` and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
uintptr_t fc_last_error_message(char *buf, uintptr_t len);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum FcStatus fc_kernel_power(double lambda, double beta, struct FcKernel **out_kernel);

/**
 * # Safety
 * `out_kernel` must be valid for writes.
 */
enum FcStatus fc_kernel_constant(double lambda, struct FcKernel **out_kernel);

/**
 * # Safety
 * `kernel` must be a live handle and `value` valid for writes.
 */
enum FcStatus fc_kernel_eval(const struct FcKernel *kernel, double r, double *value);

/**
 * # Safety
 * `kernel` must be a live handle and `heavy` valid for writes.
 */
enum FcStatus fc_kernel_heavy_tail(const struct FcKernel *kernel, bool *heavy);

/**
 * # Safety
 * `kernel` must be null or a handle not yet freed.
 */
void fc_kernel_free(struct FcKernel *kernel);

/**
 * Builds an ensemble from row-major `count × dim` positions and velocities;
 * `thetas` (length `count`) may be null for the forceless model.
 *
 * # Safety
 * Arrays must be valid for the stated lengths; `out_ensemble` valid for writes.
 */
enum FcStatus fc_ensemble_new(uintptr_t dim,
                              uintptr_t count,
                              const double *positions,
                              const double *velocities,
                              const double *thetas,
                              struct FcEnsemble **out_ensemble);

/**
 * `count` i.i.d. particles uniform on the position box `[pos_lo, pos_hi]`
 * and velocity box `[vel_lo, vel_hi]` (each of length `dim`).
 *
 * # Safety
 * Bounds arrays must hold `dim` values; `out_ensemble` valid for writes.
 */
enum FcStatus fc_ensemble_sample_box(uintptr_t dim,
                                     uintptr_t count,
                                     const double *pos_lo,
                                     const double *pos_hi,
                                     const double *vel_lo,
                                     const double *vel_hi,
                                     uint64_t seed,
                                     struct FcEnsemble **out_ensemble);

/**
 * # Safety
 * `ensemble` must be a live handle.
 */
uintptr_t fc_ensemble_count(const struct FcEnsemble *ensemble);

/**
 * # Safety
 * `ensemble` must be a live handle.
 */
uintptr_t fc_ensemble_dim(const struct FcEnsemble *ensemble);

/**
 * # Safety
 * `ensemble` must be a live handle.
 */
double fc_ensemble_time(const struct FcEnsemble *ensemble);

/**
 * Copies the `count × dim` positions into `buf` (capacity `len`).
 *
 * # Safety
 * `ensemble` live; `buf` valid for `len` writes.
 */
enum FcStatus fc_ensemble_positions(const struct FcEnsemble *ensemble, double *buf, uintptr_t len);

/**
 * # Safety
 * `ensemble` live; `buf` valid for `len` writes.
 */
enum FcStatus fc_ensemble_velocities(const struct FcEnsemble *ensemble, double *buf, uintptr_t len);

/**
 * # Safety
 * `ensemble` must be null or a handle not yet freed.
 */
void fc_ensemble_free(struct FcEnsemble *ensemble);

/**
 * Integrates `ensemble` over a span `t_end` past its current time with RK4
 * steps of `dt` and returns the final state. `force` may be null (forceless
 * model).
 *
 * # Safety
 * Handles live; `force` null or valid; `out_ensemble` valid for writes.
 */
enum FcStatus fc_integrate(const struct FcEnsemble *ensemble,
                           const struct FcKernel *kernel,
                           const struct FcForceParams *force,
                           double dt,
                           double t_end,
                           struct FcEnsemble **out_ensemble);

/**
 * Exact W2 between two uniform `m`-point measures in `R^dim` (row-major).
 *
 * # Safety
 * `mu`, `nu` valid for `m·dim` reads; `w2` valid for writes.
 */
enum FcStatus fc_w2_exact(uintptr_t m,
                          uintptr_t dim,
                          const double *mu,
                          const double *nu,
                          double *w2);

/**
 * Brute-force W2 (`m ≤ 8`).
 *
 * # Safety
 * As [`fc_w2_exact`].
 */
enum FcStatus fc_w2_bruteforce(uintptr_t m,
                               uintptr_t dim,
                               const double *mu,
                               const double *nu,
                               double *w2);

/**
 * Runs the experiment described by the TOML document `config` and stores
 * the process exit status it implies (0 pass, 1 check failure, 2 config
 * error, 3 numerical failure) in `exit_code`. `output_dir` may be null to
 * use the directory named in the config.
 *
 * # Safety
 * `config` and `output_dir` NUL-terminated (or null for `output_dir`);
 * `exit_code` valid for writes.
 */
enum FcStatus fc_run_config(const char *config, const char *output_dir, int32_t *exit_code);

/**
 * Runs the `chaos` experiment in `config` and returns its aggregate.
 *
 * # Safety
 * `config` NUL-terminated; `out_aggregate` valid for writes.
 */
enum FcStatus fc_chaos_estimate(const char *config, struct FcAggregate **out_aggregate);

/**
 * # Safety
 * `aggregate` must be a live handle.
 */
uintptr_t fc_aggregate_len(const struct FcAggregate *aggregate);

/**
 * # Safety
 * `aggregate` live; `row` valid for writes.
 */
enum FcStatus fc_aggregate_row(const struct FcAggregate *aggregate,
                               uintptr_t index,
                               struct FcAggregateRow *row);

/**
 * Writes `sqrt((k/N) mean_total(t))` for every row into `buf`.
 *
 * # Safety
 * `aggregate` live; `buf` valid for `len` writes.
 */
enum FcStatus fc_marginal_w2_bound(const struct FcAggregate *aggregate,
                                   uintptr_t k,
                                   uintptr_t n,
                                   double *buf,
                                   uintptr_t len);

/**
 * # Safety
 * `aggregate` must be null or a handle not yet freed.
 */
void fc_aggregate_free(struct FcAggregate *aggregate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOCKCHAOS_H */

#ifndef EXPMA_LAB_H
#define EXPMA_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ExpmaStatus {
  EXPMA_STATUS_OK = 0,
  EXPMA_STATUS_NULL_POINTER = 1,
  EXPMA_STATUS_INVALID_PARAMETER = 2,
  EXPMA_STATUS_KAPPA_EQUALS_LAMBDA = 3,
  EXPMA_STATUS_LAMBDA_EQUALS_ALPHA_PLUS_BETA = 4,
  EXPMA_STATUS_WRONG_DRIFT_MODEL = 5,
  EXPMA_STATUS_DEGENERATE_Z_PROCESS = 6,
  EXPMA_STATUS_LEVERAGE_COST_SINGULARITY = 7,
  EXPMA_STATUS_OUTSIDE_EFFECTIVE_SUPPORT = 8,
  EXPMA_STATUS_QUADRATURE_FAILURE = 9,
  EXPMA_STATUS_CFL_VIOLATION = 10,
  EXPMA_STATUS_PDE_INSTABILITY = 11,
  EXPMA_STATUS_DOMAIN = 12,
  EXPMA_STATUS_RESOURCE_LIMIT = 13,
  EXPMA_STATUS_CONFIG = 14,
  EXPMA_STATUS_IO = 15,
  EXPMA_STATUS_PANIC = 16,
} ExpmaStatus;

typedef enum ExpmaStrategyKind {
  /**
   * Weight `a z + b` with the given coefficients.
   */
  EXPMA_STRATEGY_KIND_CONSTANT_AFFINE = 0,
  EXPMA_STRATEGY_KIND_BUY_AND_HOLD = 1,
  /**
   * Long-run optimal affine coefficients of the model.
   */
  EXPMA_STRATEGY_KIND_GROWTH = 2,
  /**
   * Optimal constant affine coefficients for the backtest horizon.
   */
  EXPMA_STRATEGY_KIND_UTILITY_C1 = 3,
  /**
   * Optimal time-varying affine coefficients (OU only).
   */
  EXPMA_STRATEGY_KIND_UTILITY_C2 = 4,
} ExpmaStrategyKind;

/**
 * Opaque stationary filter for the two-state drift.
 */
typedef struct ExpmaFilter ExpmaFilter;

/**
 * Opaque validated model parameters.
 */
typedef struct ExpmaModel ExpmaModel;

typedef struct ExpmaOuMoments {
  double m1;
  double v1;
  double m2;
  double v2;
  double m3;
} ExpmaOuMoments;

typedef struct ExpmaCtmcMoments {
  double n2;
  double n3;
  double n4;
} ExpmaCtmcMoments;

typedef struct ExpmaCtmcLimits {
  double h_inf;
  double i_inf;
  double j_inf;
  double c_inf;
  double d_inf;
} ExpmaCtmcLimits;

typedef struct ExpmaBacktestSpec {
  double horizon_months;
  /**
   * Step in months; 0 selects one trading day.
   */
  double dt;
  uint64_t n_paths;
  uint64_t seed;
  double omega;
  /**
   * One of [`ExpmaStrategyKind`].
   */
  int32_t strategy;
  double a;
  double b;
} ExpmaBacktestSpec;

typedef struct ExpmaMetrics {
  double total_return;
  double se_return;
  double avg_daily_return;
  double se_daily_return;
  /**
   * NaN when `has_sharpe` is 0.
   */
  double sharpe;
  double se_sharpe;
  int32_t has_sharpe;
  double log_growth;
  double se_log_growth;
  uint64_t n_paths;
  uint64_t n_steps;
  uint64_t bankrupt_count;
} ExpmaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Name of a status value; the string is static. Unknown values give
 * `"unknown"`.
 */
const char *expma_status_string(int32_t status);

/**
 * Message of the last failure on this thread. Valid until the next failing
 * call on the same thread.
 */
const char *expma_last_error_message(void);

/**
 * OU drift model with the stationary initial drift law.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum ExpmaStatus expma_model_new_ou(double sigma,
                                    double lambda,
                                    double kappa,
                                    double mu_bar,
                                    double delta,
                                    struct ExpmaModel **out);

/**
 * OU drift model with explicit initial drift mean and variance.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum ExpmaStatus expma_model_new_ou_with_initial(double sigma,
                                                 double lambda,
                                                 double kappa,
                                                 double mu_bar,
                                                 double delta,
                                                 double m1_0,
                                                 double v1_0,
                                                 struct ExpmaModel **out);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum ExpmaStatus expma_model_new_ctmc(double sigma,
                                      double lambda,
                                      double rho1,
                                      double rho2,
                                      double alpha,
                                      double beta,
                                      struct ExpmaModel **out);

/**
 * # Safety
 * `model` must come from an `expma_model_new_*` call and not be freed twice.
 */
void expma_model_free(struct ExpmaModel *model);

/**
 * # Safety
 * `out` must be null or valid for writes.
 */
enum ExpmaStatus expma_period_to_lambda(uint32_t period_days, double dt, double *out);

/**
 * Optimal constant affine coefficients for horizon `horizon_months`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_optimal_c1(const struct ExpmaModel *m,
                                  double horizon_months,
                                  double *out_a,
                                  double *out_b);

/**
 * Time-varying optimal affine coefficients at `t` (OU only).
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_optimal_c2(const struct ExpmaModel *m,
                                  double t,
                                  double *out_a,
                                  double *out_b);

/**
 * Long-run optimal affine coefficients.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_growth_limit(const struct ExpmaModel *m, double *out_a, double *out_b);

/**
 * Long-run growth of the optimal affine strategy; `lambda <= 0` uses the
 * model's own decay rate (OU only).
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_eta(const struct ExpmaModel *m, double lambda, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_hat_lambda(const struct ExpmaModel *m, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_ou_moments(const struct ExpmaModel *m, double t, struct ExpmaOuMoments *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_ctmc_moments(const struct ExpmaModel *m,
                                    double t,
                                    struct ExpmaCtmcMoments *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_ctmc_limits(const struct ExpmaModel *m, struct ExpmaCtmcLimits *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_long_run_growth_ctmc(const struct ExpmaModel *m, double *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_filter_new(const struct ExpmaModel *m, struct ExpmaFilter **out);

/**
 * Stationary filter weight `g_inf(x)`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_filter_g_inf(const struct ExpmaFilter *f, double x, double *out);

/**
 * Stationary conditional drift mean at `x`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_filter_expectation(const struct ExpmaFilter *f, double x, double *out);

/**
 * # Safety
 * `f` must come from [`expma_filter_new`] and not be freed twice.
 */
void expma_filter_free(struct ExpmaFilter *f);

/**
 * Simulate `spec.n_paths` paths of the model and report the metrics of one
 * strategy.
 *
 * # Safety
 * Pointers must be valid.
 */
enum ExpmaStatus expma_backtest(const struct ExpmaModel *m,
                                const struct ExpmaBacktestSpec *spec,
                                struct ExpmaMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPMA_LAB_H */

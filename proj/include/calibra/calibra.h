/* calibra: covariate calibration weighting for indirect treatment
 * comparison. Balancing-weight solvers (entropy / stable / empirical
 * likelihood), weighted-effect estimators, model-independent variance
 * estimation, and a Monte Carlo scenario engine.
 *
 * C API: opaque handles plus status codes. Every function that can fail
 * returns a calibra_status; calibra_last_error() gives a thread-local
 * message for the most recent failure on the calling thread.
 */
#ifndef CALIBRA_H
#define CALIBRA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CALIBRA_API __declspec(dllexport)
#else
#define CALIBRA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum calibra_status {
  CALIBRA_OK = 0,
  CALIBRA_ERROR = 1,            /* invalid argument / internal failure */
  CALIBRA_INFEASIBLE = 2,       /* balance target unreachable */
  CALIBRA_PARSE_ERROR = 3,      /* reserved for callers' file parsing */
  CALIBRA_MISSING_SUMMARY = 4,  /* required target summary absent */
  CALIBRA_SINGULAR = 5          /* singular fit or Jacobian */
} calibra_status;

typedef enum calibra_method {
  CALIBRA_METHOD_ENTROPY = 0,  /* matching-adjusted indirect comparison weights */
  CALIBRA_METHOD_STABLE = 1,
  CALIBRA_METHOD_EMPIRICAL_LIKELIHOOD = 2
} calibra_method;

typedef enum calibra_estimand {
  CALIBRA_ESTIMAND_MU1 = 0,
  CALIBRA_ESTIMAND_UNANCHORED = 1,
  CALIBRA_ESTIMAND_GENERALIZE = 2,
  CALIBRA_ESTIMAND_ANCHORED = 3,
  CALIBRA_ESTIMAND_REGRESSION = 4
} calibra_estimand;

typedef enum calibra_y_model {
  CALIBRA_Y_LINEAR = 0,
  CALIBRA_Y_THRESHOLD = 1
} calibra_y_model;

typedef enum calibra_p_model {
  CALIBRA_P_NORMAL = 0,
  CALIBRA_P_LOGNORMAL = 1
} calibra_p_model;

typedef struct calibra_dataset calibra_dataset;
typedef struct calibra_target calibra_target;
typedef struct calibra_weights calibra_weights;

CALIBRA_API const char* calibra_version(void);
CALIBRA_API const char* calibra_last_error(void);

/* ---- data handles ---- */

/* x is row-major n×p (covariates only, no intercept column); arm may be
 * NULL when no treatment labels exist. */
CALIBRA_API calibra_status calibra_dataset_create(const double* x, size_t n,
                                                  size_t p, const double* y,
                                                  const int32_t* arm,
                                                  calibra_dataset** out);
CALIBRA_API void calibra_dataset_free(calibra_dataset* d);

CALIBRA_API calibra_status calibra_target_create(const double* means, size_t p,
                                                 calibra_target** out);
CALIBRA_API void calibra_target_free(calibra_target* t);
CALIBRA_API calibra_status calibra_target_set_n0(calibra_target* t, uint64_t n0);
CALIBRA_API calibra_status calibra_target_set_ybar0(calibra_target* t, double v);
CALIBRA_API calibra_status calibra_target_set_sigma0_sq(calibra_target* t, double v);
CALIBRA_API calibra_status calibra_target_set_mu02(calibra_target* t, double v);

/* ---- weight solving ---- */

typedef struct calibra_solver_control {
  int32_t max_iterations;      /* default 300 */
  double relative_tolerance;   /* default 1e-8 */
  double gradient_tolerance;   /* default 1e-8 */
} calibra_solver_control;

CALIBRA_API void calibra_solver_control_default(calibra_solver_control* c);

/* tolerance_d: NULL for exact balance, else length-p elementwise slack
 * (stable method only). control: NULL for defaults. */
CALIBRA_API calibra_status calibra_solve_weights(const calibra_dataset* d,
                                                 const calibra_target* t,
                                                 calibra_method method,
                                                 const double* tolerance_d,
                                                 const calibra_solver_control* control,
                                                 calibra_weights** out);
/* Wrap externally stored weights (e.g. re-read from a file) so they can be
 * applied through the estimators. */
CALIBRA_API calibra_status calibra_weights_from_values(const double* w, size_t n,
                                                       calibra_weights** out);
CALIBRA_API void calibra_weights_free(calibra_weights* w);

CALIBRA_API size_t calibra_weights_size(const calibra_weights* w);
CALIBRA_API calibra_status calibra_weights_values(const calibra_weights* w, double* out);
CALIBRA_API size_t calibra_weights_dual_size(const calibra_weights* w);
CALIBRA_API calibra_status calibra_weights_dual(const calibra_weights* w, double* out);
CALIBRA_API calibra_status calibra_weights_imbalance(const calibra_weights* w, double* out);
CALIBRA_API double calibra_weights_ess(const calibra_weights* w);
CALIBRA_API int calibra_weights_converged(const calibra_weights* w);
CALIBRA_API calibra_method calibra_weights_method(const calibra_weights* w);

/* (Σw)²/Σw² of a raw weight vector. */
CALIBRA_API calibra_status calibra_ess(const double* w, size_t n, double* out);

/* ---- estimators ---- */

/* anchor_arm_label is used by the anchored estimand only; pass 2 for the
 * conventional labeling (1 = treatment, 2 = anchor). */
CALIBRA_API calibra_status calibra_estimate(const calibra_dataset* d,
                                            const calibra_target* t,
                                            const calibra_weights* w,
                                            calibra_estimand estimand,
                                            int32_t anchor_arm_label, double* out);
CALIBRA_API calibra_status calibra_unadjusted_estimate(const calibra_dataset* d,
                                                       const calibra_target* t,
                                                       calibra_estimand estimand,
                                                       int32_t anchor_arm_label,
                                                       double* out);
/* OLS of y on [1, x] predicted at the target means; optionally returns the
 * n fitted values (pass NULL to skip). */
CALIBRA_API calibra_status calibra_regression_estimate(const calibra_dataset* d,
                                                       const calibra_target* t,
                                                       double* out,
                                                       double* fitted_or_null);
CALIBRA_API calibra_status calibra_imbalance(const calibra_dataset* d,
                                             const calibra_weights* w,
                                             const calibra_target* t, double* out);

/* ---- variance estimators (for the weighted mean μ̂₁) ---- */

CALIBRA_API calibra_status calibra_variance_naive(const calibra_dataset* d,
                                                  const calibra_weights* w,
                                                  double mu1_hat, double* out);
CALIBRA_API calibra_status calibra_variance_survey(const calibra_dataset* d,
                                                   const calibra_weights* w,
                                                   const double* fitted, double* out);
/* Model-independent two-step sandwich variance; entropy weights only. */
CALIBRA_API calibra_status calibra_variance_two_step(const calibra_dataset* d,
                                                     const calibra_weights* w,
                                                     const calibra_target* t,
                                                     double mu1_hat, double* out);
CALIBRA_API calibra_status calibra_variance_bootstrap(
    const calibra_dataset* d, const calibra_target* t, calibra_method method,
    const double* tolerance_d, calibra_estimand estimand, int32_t anchor_arm_label,
    uint32_t replicates, uint64_t seed, uint64_t stream,
    const calibra_solver_control* control, double* out_variance,
    uint32_t* out_failures);
CALIBRA_API calibra_status calibra_variance_augment(double v_mu1,
                                                    const calibra_target* t,
                                                    double* out);

/* ---- Monte Carlo scenario engine ---- */

typedef struct calibra_scenario {
  uint32_t n1;
  uint32_t n0;
  uint32_t p;
  const double* m;  /* length p trial covariate means */
  double beta;
  double sigma_eps;
  int32_t y_model;  /* calibra_y_model */
  int32_t p_model;  /* calibra_p_model */
  uint32_t n_runs;
  uint32_t bootstrap_replicates;  /* 0 disables the bootstrap columns */
  uint64_t seed;
} calibra_scenario;

typedef struct calibra_sim_row {
  double mu1_true;
  double bias_unadjusted;
  double bias_method;
  double coverage_2s;
  double coverage_boot;  /* NaN when bootstrap disabled */
  double se_2s;
  double se_boot;        /* NaN when bootstrap disabled */
  double se_maic;
  double se_empirical;
  uint32_t solver_failures;
  int32_t degenerate;
} calibra_sim_row;

/* max_threads: 0 = hardware concurrency. Output is deterministic for a
 * given scenario regardless of the thread count. */
CALIBRA_API calibra_status calibra_run_scenario(const calibra_scenario* scenario,
                                                int32_t max_threads,
                                                calibra_sim_row* out);

typedef struct calibra_comparison_row {
  uint32_t run;
  int32_t method;  /* calibra_method */
  double error;    /* estimate − mu1_true */
} calibra_comparison_row;

/* Allocates *rows (free with calibra_comparison_rows_free). tolerance_d:
 * NULL or length p, applied to the stable method. */
CALIBRA_API calibra_status calibra_run_comparison(
    const calibra_scenario* scenario, const int32_t* methods, size_t n_methods,
    const double* tolerance_d, int32_t max_threads, calibra_comparison_row** rows,
    size_t* n_rows);
CALIBRA_API void calibra_comparison_rows_free(calibra_comparison_row* rows);

#ifdef __cplusplus
}
#endif

#endif /* CALIBRA_H */

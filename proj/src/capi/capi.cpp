#include "calibra/calibra.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "calibration/calibration.hpp"
#include "errors.hpp"
#include "estimators/estimators.hpp"
#include "numkit/rng.hpp"
#include "simulation/simulation.hpp"
#include "variance/variance.hpp"

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

calibra_status translate_current_exception() {
  try {
    throw;
  } catch (const calibra::InfeasibleError& e) {
    std::string msg = e.what();
    if (!e.imbalance().empty()) {
      msg += "; imbalance = [";
      char buf[32];
      for (std::size_t i = 0; i < e.imbalance().size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s%.6g", i ? ", " : "", e.imbalance()[i]);
        msg += buf;
      }
      msg += "]";
    }
    set_error(msg);
    return CALIBRA_INFEASIBLE;
  } catch (const calibra::MissingSummaryError& e) {
    set_error(e.what());
    return CALIBRA_MISSING_SUMMARY;
  } catch (const calibra::SingularError& e) {
    set_error(e.what());
    return CALIBRA_SINGULAR;
  } catch (const calibra::BootstrapFailedError& e) {
    set_error(e.what());
    return CALIBRA_ERROR;
  } catch (const std::bad_alloc&) {
    set_error("out of memory");
    return CALIBRA_ERROR;
  } catch (const std::exception& e) {
    set_error(e.what());
    return CALIBRA_ERROR;
  } catch (...) {
    set_error("unknown error");
    return CALIBRA_ERROR;
  }
}

template <typename Fn>
calibra_status guarded(Fn&& fn) {
  try {
    fn();
    return CALIBRA_OK;
  } catch (...) {
    return translate_current_exception();
  }
}

calibra::calibration::Method to_method(calibra_method m) {
  switch (m) {
    case CALIBRA_METHOD_ENTROPY: return calibra::calibration::Method::entropy;
    case CALIBRA_METHOD_STABLE: return calibra::calibration::Method::stable;
    case CALIBRA_METHOD_EMPIRICAL_LIKELIHOOD:
      return calibra::calibration::Method::empirical_likelihood;
  }
  throw std::invalid_argument("unknown method code");
}

calibra_method from_method(calibra::calibration::Method m) {
  switch (m) {
    case calibra::calibration::Method::entropy: return CALIBRA_METHOD_ENTROPY;
    case calibra::calibration::Method::stable: return CALIBRA_METHOD_STABLE;
    case calibra::calibration::Method::empirical_likelihood:
      return CALIBRA_METHOD_EMPIRICAL_LIKELIHOOD;
  }
  return CALIBRA_METHOD_ENTROPY;
}

calibra::estimators::EstimandSpec to_estimand(calibra_estimand e, int32_t anchor) {
  using calibra::estimators::EstimandKind;
  calibra::estimators::EstimandSpec spec;
  switch (e) {
    case CALIBRA_ESTIMAND_MU1: spec.kind = EstimandKind::mu1_weighted; break;
    case CALIBRA_ESTIMAND_UNANCHORED: spec.kind = EstimandKind::unanchored_delta; break;
    case CALIBRA_ESTIMAND_GENERALIZE: spec.kind = EstimandKind::generalization_delta; break;
    case CALIBRA_ESTIMAND_ANCHORED: spec.kind = EstimandKind::anchored_delta; break;
    case CALIBRA_ESTIMAND_REGRESSION: spec.kind = EstimandKind::regression_mu1; break;
    default: throw std::invalid_argument("unknown estimand code");
  }
  spec.anchor_arm_label = anchor;
  return spec;
}

calibra::numkit::OptimControl to_control(const calibra_solver_control* c) {
  calibra::numkit::OptimControl out;
  if (c) {
    out.max_iterations = c->max_iterations;
    out.relative_tolerance = c->relative_tolerance;
    out.gradient_tolerance = c->gradient_tolerance;
  }
  return out;
}

calibra::simulation::ScenarioConfig to_scenario(const calibra_scenario* s) {
  if (!s || !s->m) throw std::invalid_argument("null scenario");
  calibra::simulation::ScenarioConfig c;
  c.n1 = s->n1;
  c.n0 = s->n0;
  c.p = s->p;
  c.m.assign(s->m, s->m + s->p);
  c.beta = s->beta;
  c.sigma_eps = s->sigma_eps;
  c.y_model = s->y_model == CALIBRA_Y_THRESHOLD
                  ? calibra::simulation::YModel::threshold
                  : calibra::simulation::YModel::linear;
  c.p_model = s->p_model == CALIBRA_P_LOGNORMAL
                  ? calibra::simulation::PModel::lognormal
                  : calibra::simulation::PModel::normal;
  c.n_runs = s->n_runs;
  c.bootstrap_replicates = s->bootstrap_replicates;
  c.seed = s->seed;
  return c;
}

}  // namespace

struct calibra_dataset {
  calibra::calibration::TrialData data;
};

struct calibra_target {
  calibra::calibration::TargetSummary summary;
};

struct calibra_weights {
  calibra::calibration::WeightSolution solution;
};

extern "C" {

const char* calibra_version(void) { return "0.1.0"; }

const char* calibra_last_error(void) { return g_last_error.c_str(); }

calibra_status calibra_dataset_create(const double* x, size_t n, size_t p,
                                      const double* y, const int32_t* arm,
                                      calibra_dataset** out) {
  return guarded([&] {
    if (!x || !y || !out) throw std::invalid_argument("null argument");
    calibra::numkit::Matrix mx(n, p);
    std::memcpy(mx.row(0), x, sizeof(double) * n * p);
    calibra::numkit::Vector vy(y, y + n);
    std::optional<std::vector<int>> varm;
    if (arm) varm.emplace(arm, arm + n);
    *out = new calibra_dataset{
        calibra::calibration::TrialData(std::move(mx), std::move(vy), std::move(varm))};
  });
}

void calibra_dataset_free(calibra_dataset* d) { delete d; }

calibra_status calibra_target_create(const double* means, size_t p,
                                     calibra_target** out) {
  return guarded([&] {
    if (!means || !out || p == 0) throw std::invalid_argument("null or empty target");
    calibra_target* t = new calibra_target;
    t->summary.xbar0.assign(means, means + p);
    *out = t;
  });
}

void calibra_target_free(calibra_target* t) { delete t; }

calibra_status calibra_target_set_n0(calibra_target* t, uint64_t n0) {
  return guarded([&] {
    if (!t || n0 == 0) throw std::invalid_argument("n0 must be positive");
    t->summary.n0 = n0;
  });
}

calibra_status calibra_target_set_ybar0(calibra_target* t, double v) {
  return guarded([&] {
    if (!t) throw std::invalid_argument("null target");
    t->summary.ybar0 = v;
  });
}

calibra_status calibra_target_set_sigma0_sq(calibra_target* t, double v) {
  return guarded([&] {
    if (!t || v < 0.0) throw std::invalid_argument("sigma0_sq must be nonnegative");
    t->summary.sigma0_sq = v;
  });
}

calibra_status calibra_target_set_mu02(calibra_target* t, double v) {
  return guarded([&] {
    if (!t) throw std::invalid_argument("null target");
    t->summary.mu02 = v;
  });
}

void calibra_solver_control_default(calibra_solver_control* c) {
  if (!c) return;
  calibra::numkit::OptimControl d;
  c->max_iterations = d.max_iterations;
  c->relative_tolerance = d.relative_tolerance;
  c->gradient_tolerance = d.gradient_tolerance;
}

calibra_status calibra_solve_weights(const calibra_dataset* d, const calibra_target* t,
                                     calibra_method method, const double* tolerance_d,
                                     const calibra_solver_control* control,
                                     calibra_weights** out) {
  return guarded([&] {
    if (!d || !t || !out) throw std::invalid_argument("null argument");
    calibra::calibration::CalibrationProblem problem{
        d->data, t->summary, to_method(method),
        tolerance_d ? calibra::numkit::Vector(tolerance_d, tolerance_d + d->data.p())
                    : calibra::numkit::Vector{},
        to_control(control)};
    *out = new calibra_weights{calibra::calibration::solve(problem)};
  });
}

calibra_status calibra_weights_from_values(const double* w, size_t n,
                                           calibra_weights** out) {
  return guarded([&] {
    if (!w || !out || n == 0) throw std::invalid_argument("null or empty weights");
    calibra::calibration::WeightSolution sol;
    sol.weights.assign(w, w + n);
    sol.converged = true;
    sol.ess = calibra::calibration::effective_sample_size(sol.weights);
    *out = new calibra_weights{std::move(sol)};
  });
}

void calibra_weights_free(calibra_weights* w) { delete w; }

size_t calibra_weights_size(const calibra_weights* w) {
  return w ? w->solution.weights.size() : 0;
}

calibra_status calibra_weights_values(const calibra_weights* w, double* out) {
  return guarded([&] {
    if (!w || !out) throw std::invalid_argument("null argument");
    std::memcpy(out, w->solution.weights.data(),
                sizeof(double) * w->solution.weights.size());
  });
}

size_t calibra_weights_dual_size(const calibra_weights* w) {
  return w ? w->solution.dual_params.size() : 0;
}

calibra_status calibra_weights_dual(const calibra_weights* w, double* out) {
  return guarded([&] {
    if (!w || !out) throw std::invalid_argument("null argument");
    std::memcpy(out, w->solution.dual_params.data(),
                sizeof(double) * w->solution.dual_params.size());
  });
}

calibra_status calibra_weights_imbalance(const calibra_weights* w, double* out) {
  return guarded([&] {
    if (!w || !out) throw std::invalid_argument("null argument");
    std::memcpy(out, w->solution.imbalance.data(),
                sizeof(double) * w->solution.imbalance.size());
  });
}

double calibra_weights_ess(const calibra_weights* w) {
  return w ? w->solution.ess : 0.0;
}

int calibra_weights_converged(const calibra_weights* w) {
  return w && w->solution.converged ? 1 : 0;
}

calibra_method calibra_weights_method(const calibra_weights* w) {
  return w ? from_method(w->solution.method) : CALIBRA_METHOD_ENTROPY;
}

calibra_status calibra_ess(const double* w, size_t n, double* out) {
  return guarded([&] {
    if (!w || !out) throw std::invalid_argument("null argument");
    *out = calibra::calibration::effective_sample_size(
        calibra::numkit::Vector(w, w + n));
  });
}

calibra_status calibra_estimate(const calibra_dataset* d, const calibra_target* t,
                                const calibra_weights* w, calibra_estimand estimand,
                                int32_t anchor_arm_label, double* out) {
  return guarded([&] {
    if (!d || !t || !w || !out) throw std::invalid_argument("null argument");
    *out = calibra::estimators::point_estimate(d->data, t->summary, w->solution,
                                               to_estimand(estimand, anchor_arm_label));
  });
}

calibra_status calibra_unadjusted_estimate(const calibra_dataset* d,
                                           const calibra_target* t,
                                           calibra_estimand estimand,
                                           int32_t anchor_arm_label, double* out) {
  return guarded([&] {
    if (!d || !t || !out) throw std::invalid_argument("null argument");
    *out = calibra::estimators::unadjusted_estimate(
        d->data, t->summary, to_estimand(estimand, anchor_arm_label));
  });
}

calibra_status calibra_regression_estimate(const calibra_dataset* d,
                                           const calibra_target* t, double* out,
                                           double* fitted_or_null) {
  return guarded([&] {
    if (!d || !t || !out) throw std::invalid_argument("null argument");
    calibra::numkit::Vector fitted;
    *out = calibra::estimators::regression_estimate(
        d->data, t->summary, fitted_or_null ? &fitted : nullptr);
    if (fitted_or_null)
      std::memcpy(fitted_or_null, fitted.data(), sizeof(double) * fitted.size());
  });
}

calibra_status calibra_imbalance(const calibra_dataset* d, const calibra_weights* w,
                                 const calibra_target* t, double* out) {
  return guarded([&] {
    if (!d || !w || !t || !out) throw std::invalid_argument("null argument");
    const calibra::numkit::Vector imb =
        calibra::estimators::imbalance_vector(d->data, w->solution, t->summary);
    std::memcpy(out, imb.data(), sizeof(double) * imb.size());
  });
}

calibra_status calibra_variance_naive(const calibra_dataset* d, const calibra_weights* w,
                                      double mu1_hat, double* out) {
  return guarded([&] {
    if (!d || !w || !out) throw std::invalid_argument("null argument");
    *out = calibra::variance::naive_variance(d->data, w->solution, mu1_hat);
  });
}

calibra_status calibra_variance_survey(const calibra_dataset* d,
                                       const calibra_weights* w, const double* fitted,
                                       double* out) {
  return guarded([&] {
    if (!d || !w || !fitted || !out) throw std::invalid_argument("null argument");
    *out = calibra::variance::survey_variance(
        d->data, w->solution,
        calibra::numkit::Vector(fitted, fitted + d->data.n()));
  });
}

calibra_status calibra_variance_two_step(const calibra_dataset* d,
                                         const calibra_weights* w,
                                         const calibra_target* t, double mu1_hat,
                                         double* out) {
  return guarded([&] {
    if (!d || !w || !t || !out) throw std::invalid_argument("null argument");
    *out = calibra::variance::two_step_variance(d->data, w->solution, t->summary,
                                                mu1_hat);
  });
}

calibra_status calibra_variance_bootstrap(const calibra_dataset* d,
                                          const calibra_target* t,
                                          calibra_method method,
                                          const double* tolerance_d,
                                          calibra_estimand estimand,
                                          int32_t anchor_arm_label,
                                          uint32_t replicates, uint64_t seed,
                                          uint64_t stream,
                                          const calibra_solver_control* control,
                                          double* out_variance,
                                          uint32_t* out_failures) {
  return guarded([&] {
    if (!d || !t || !out_variance) throw std::invalid_argument("null argument");
    calibra::calibration::CalibrationProblem problem{
        d->data, t->summary, to_method(method),
        tolerance_d ? calibra::numkit::Vector(tolerance_d, tolerance_d + d->data.p())
                    : calibra::numkit::Vector{},
        to_control(control)};
    calibra::variance::BootstrapSpec spec{replicates,
                                          calibra::numkit::RngStream(seed, stream),
                                          true};
    const calibra::variance::BootstrapResult res = calibra::variance::bootstrap_variance(
        d->data, problem, to_estimand(estimand, anchor_arm_label), spec);
    *out_variance = res.variance;
    if (out_failures) *out_failures = res.failures;
  });
}

calibra_status calibra_variance_augment(double v_mu1, const calibra_target* t,
                                        double* out) {
  return guarded([&] {
    if (!t || !out) throw std::invalid_argument("null argument");
    *out = calibra::variance::augmented_variance(v_mu1, t->summary);
  });
}

calibra_status calibra_run_scenario(const calibra_scenario* scenario,
                                    int32_t max_threads, calibra_sim_row* out) {
  return guarded([&] {
    if (!out) throw std::invalid_argument("null argument");
    const calibra::simulation::ScenarioResult r =
        calibra::simulation::run_scenario(to_scenario(scenario), max_threads);
    out->mu1_true = r.mu1_true;
    out->bias_unadjusted = r.bias_unadjusted;
    out->bias_method = r.bias_method;
    out->coverage_2s = r.coverage_2s;
    out->coverage_boot = r.coverage_boot;
    out->se_2s = r.se_2s;
    out->se_boot = r.se_boot;
    out->se_maic = r.se_maic;
    out->se_empirical = r.se_empirical;
    out->solver_failures = r.solver_failures;
    out->degenerate = r.degenerate ? 1 : 0;
  });
}

calibra_status calibra_run_comparison(const calibra_scenario* scenario,
                                      const int32_t* methods, size_t n_methods,
                                      const double* tolerance_d, int32_t max_threads,
                                      calibra_comparison_row** rows, size_t* n_rows) {
  return guarded([&] {
    if (!methods || n_methods == 0 || !rows || !n_rows)
      throw std::invalid_argument("null argument");
    const calibra::simulation::ScenarioConfig config = to_scenario(scenario);
    std::vector<calibra::calibration::Method> ms;
    ms.reserve(n_methods);
    for (size_t i = 0; i < n_methods; ++i)
      ms.push_back(to_method(static_cast<calibra_method>(methods[i])));
    const calibra::numkit::Vector d =
        tolerance_d ? calibra::numkit::Vector(tolerance_d, tolerance_d + config.p)
                    : calibra::numkit::Vector{};
    const std::vector<calibra::simulation::ComparisonRow> out =
        calibra::simulation::run_method_comparison(config, ms, d, max_threads);
    calibra_comparison_row* buf = new calibra_comparison_row[out.size()];
    for (size_t i = 0; i < out.size(); ++i) {
      buf[i].run = out[i].run;
      buf[i].method = static_cast<int32_t>(from_method(out[i].method));
      buf[i].error = out[i].error;
    }
    *rows = buf;
    *n_rows = out.size();
  });
}

void calibra_comparison_rows_free(calibra_comparison_row* rows) { delete[] rows; }

}  // extern "C"

#include "simulation/simulation.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "errors.hpp"
#include "estimators/estimators.hpp"
#include "variance/variance.hpp"

namespace calibra::simulation {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Stream tags per scenario: target draw, per-run trial draw, per-run bootstrap.
constexpr std::uint64_t kTargetTag = 0x7461726765740001ULL;
constexpr std::uint64_t kRunTag = 0x72756E0000000001ULL;
constexpr std::uint64_t kBootTag = 0xB007000000000001ULL;

void validate(const ScenarioConfig& c) {
  if (c.n1 == 0 || c.n0 == 0 || c.p == 0 || c.n_runs == 0)
    throw std::invalid_argument("scenario: sizes and run count must be positive");
  if (c.m.size() != c.p)
    throw std::invalid_argument("scenario: mean vector length differs from p");
  if (c.sigma_eps < 0.0)
    throw std::invalid_argument("scenario: negative error SD");
}

double outcome_mean_given_x(const ScenarioConfig& c, double linear_pred) {
  if (c.y_model == YModel::linear) return linear_pred;
  // Threshold outcome: ε marginalized analytically; the noiseless limit is
  // the plain indicator.
  if (c.sigma_eps == 0.0) return linear_pred > 0.0 ? 1.0 : 0.0;
  return numkit::normal_cdf(linear_pred / c.sigma_eps);
}

// Runs body(0..count-1) on up to max_threads workers; results must be
// written to per-index slots so the reduction order stays fixed.
void parallel_for(std::size_t count, int max_threads,
                  const std::function<void(std::size_t)>& body) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  std::size_t workers = max_threads > 0 ? static_cast<std::size_t>(max_threads) : hw;
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        body(i);
      }
    });
  }
  for (std::thread& t : pool) t.join();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

ScenarioTruth generate_target(const ScenarioConfig& config, numkit::RngStream& rng) {
  validate(config);
  const std::size_t n0 = config.n0, p = config.p;
  ScenarioTruth truth;
  truth.xbar0.assign(p, 0.0);
  double mu = 0.0;
  for (std::size_t i = 0; i < n0; ++i) {
    double lp = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      double xij = rng.normal();
      if (config.p_model == PModel::lognormal) xij = std::exp(0.5 * xij);
      truth.xbar0[j] += xij;
      lp += config.beta * xij;
    }
    mu += outcome_mean_given_x(config, lp);
  }
  for (double& v : truth.xbar0) v /= static_cast<double>(n0);
  truth.mu1_true = mu / static_cast<double>(n0);
  return truth;
}

TrialData generate_trial(const ScenarioConfig& config, const ScenarioTruth&,
                         numkit::RngStream& rng) {
  validate(config);
  const std::size_t n = config.n1, p = config.p;
  numkit::Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double xij = config.m[j] + rng.normal();
      if (config.p_model == PModel::lognormal) xij = std::exp(0.5 * xij);
      x(i, j) = xij;
    }
  }
  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lp = 0.0;
    for (std::size_t j = 0; j < p; ++j) lp += config.beta * x(i, j);
    if (config.sigma_eps > 0.0) lp += config.sigma_eps * rng.normal();
    y[i] = config.y_model == YModel::linear ? lp : (lp > 0.0 ? 1.0 : 0.0);
  }
  return TrialData(std::move(x), std::move(y));
}

ScenarioResult run_scenario(const ScenarioConfig& config, int max_threads) {
  validate(config);
  const numkit::RngStream root(config.seed, 0);
  numkit::RngStream target_rng = root.child(kTargetTag);
  const ScenarioTruth truth = generate_target(config, target_rng);

  calibration::TargetSummary target;
  target.xbar0 = truth.xbar0;
  target.n0 = config.n0;

  struct RunOut {
    bool failed = true;
    double est = 0.0;
    double unadj = 0.0;
    double v2s = 0.0;
    double v0 = 0.0;
    double vboot = kNaN;
  };
  std::vector<RunOut> runs(config.n_runs);

  const numkit::OptimControl main_control;  // maxit 300, reltol 1e-8, gtol 1e-8
  numkit::OptimControl boot_control = main_control;
  boot_control.relative_tolerance = 1e-5;  // resample fits trade precision for cost

  parallel_for(config.n_runs, max_threads, [&](std::size_t r) {
    numkit::RngStream run_rng = root.child(kRunTag + r);
    RunOut& out = runs[r];
    try {
      TrialData trial = generate_trial(config, truth, run_rng);
      calibration::CalibrationProblem problem{trial, target, Method::entropy,
                                              {}, main_control};
      const calibration::WeightSolution w = calibration::solve_entropy(problem);
      if (!w.converged) return;

      out.est = estimators::weighted_outcome_mean(trial, w);
      out.unadj = estimators::unadjusted_estimate(
          trial, target, {estimators::EstimandKind::mu1_weighted, std::nullopt});
      out.v2s = variance::two_step_variance(trial, w, target, out.est);
      out.v0 = variance::naive_variance(trial, w, out.est);

      if (config.bootstrap_replicates > 0) {
        calibration::CalibrationProblem boot_problem{trial, target, Method::entropy,
                                                     {}, boot_control};
        variance::BootstrapSpec bspec{config.bootstrap_replicates,
                                      run_rng.child(kBootTag), true};
        try {
          out.vboot = variance::bootstrap_variance(
                          trial, boot_problem,
                          {estimators::EstimandKind::mu1_weighted, std::nullopt},
                          bspec)
                          .variance;
        } catch (const BootstrapFailedError&) {
          out.vboot = kNaN;
        }
      }
      out.failed = false;
    } catch (const InfeasibleError&) {
    } catch (const SingularError&) {
    } catch (const std::domain_error&) {
    } catch (const std::invalid_argument&) {
    }
  });

  std::vector<double> est, unadj, v2s, v0, vboot, cover2s, coverboot;
  std::uint32_t failures = 0;
  for (const RunOut& out : runs) {
    if (out.failed) {
      ++failures;
      continue;
    }
    est.push_back(out.est);
    unadj.push_back(out.unadj);
    v2s.push_back(out.v2s);
    v0.push_back(out.v0);
    const double err = std::abs(truth.mu1_true - out.est);
    cover2s.push_back(err < 1.96 * std::sqrt(out.v2s) ? 1.0 : 0.0);
    if (std::isfinite(out.vboot)) {
      vboot.push_back(out.vboot);
      coverboot.push_back(err < 1.96 * std::sqrt(out.vboot) ? 1.0 : 0.0);
    }
  }
  if (est.size() < 2)
    throw std::runtime_error("run_scenario: nearly all runs failed calibration");

  ScenarioResult row;
  row.config = config;
  row.mu1_true = truth.mu1_true;
  row.bias_method = mean_of(est) - truth.mu1_true;
  row.bias_unadjusted = mean_of(unadj) - truth.mu1_true;
  row.se_empirical = sd_of(est);
  row.se_2s = std::sqrt(mean_of(v2s));
  row.se_maic = std::sqrt(mean_of(v0));
  row.coverage_2s = mean_of(cover2s);
  row.se_boot = vboot.empty() ? kNaN : std::sqrt(mean_of(vboot));
  row.coverage_boot = coverboot.empty() ? kNaN : mean_of(coverboot);
  row.solver_failures = failures;
  row.degenerate = failures * 10 > config.n_runs;
  return row;
}

std::vector<ComparisonRow> run_method_comparison(const ScenarioConfig& config,
                                                 const std::vector<Method>& methods,
                                                 const Vector& tolerance_d,
                                                 int max_threads) {
  validate(config);
  if (methods.empty())
    throw std::invalid_argument("run_method_comparison: no methods requested");

  const numkit::RngStream root(config.seed, 0);
  numkit::RngStream target_rng = root.child(kTargetTag);
  const ScenarioTruth truth = generate_target(config, target_rng);

  calibration::TargetSummary target;
  target.xbar0 = truth.xbar0;
  target.n0 = config.n0;

  const std::size_t m = methods.size();
  std::vector<double> errors(config.n_runs * m, kNaN);

  parallel_for(config.n_runs, max_threads, [&](std::size_t r) {
    numkit::RngStream run_rng = root.child(kRunTag + r);
    TrialData trial = generate_trial(config, truth, run_rng);
    for (std::size_t k = 0; k < m; ++k) {
      try {
        calibration::CalibrationProblem problem{
            trial, target, methods[k],
            methods[k] == Method::stable ? tolerance_d : Vector{},
            numkit::OptimControl{}};
        const calibration::WeightSolution w = calibration::solve(problem);
        if (!w.converged) continue;
        errors[r * m + k] =
            estimators::weighted_outcome_mean(trial, w) - truth.mu1_true;
      } catch (const InfeasibleError&) {
      } catch (const SingularError&) {
      } catch (const std::domain_error&) {
      }
    }
  });

  std::vector<ComparisonRow> rows;
  rows.reserve(config.n_runs * m);
  for (std::uint32_t r = 0; r < config.n_runs; ++r)
    for (std::size_t k = 0; k < m; ++k)
      if (std::isfinite(errors[r * m + k]))
        rows.push_back({r, methods[k], errors[r * m + k]});
  return rows;
}

}  // namespace calibra::simulation

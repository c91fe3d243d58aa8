#pragma once

#include <cstdint>
#include <vector>

#include "calibration/calibration.hpp"
#include "numkit/rng.hpp"

namespace calibra::simulation {

using calibration::Method;
using calibration::TrialData;
using numkit::Vector;

enum class YModel { linear, threshold };
enum class PModel { normal, lognormal };

/// One Monte Carlo scenario. Trial covariates are N(m, I) (or exp(0.5·Z)
/// with Z ~ N(m, I) under the lognormal population model); the target draws
/// the same family centered at zero. Outcomes are βᵀx + ε or the indicator
/// 1{βᵀx + ε > 0} with ε ~ N(0, sigma_eps²); sigma_eps may be zero for a
/// noiseless outcome.
struct ScenarioConfig {
  std::uint32_t n1 = 500;
  std::uint32_t n0 = 2000;
  std::uint32_t p = 3;
  Vector m;                  // length p trial covariate means
  double beta = 0.3;         // common coefficient on every covariate
  double sigma_eps = 1.0;
  YModel y_model = YModel::linear;
  PModel p_model = PModel::normal;
  std::uint32_t n_runs = 2000;
  std::uint32_t bootstrap_replicates = 50;  // 0 disables the bootstrap column
  std::uint64_t seed = 1729;
};

/// Fixed across every run of a scenario: one draw of n0 target units gives
/// the target means and the true mean outcome under treatment.
struct ScenarioTruth {
  Vector xbar0;
  double mu1_true = 0.0;
};

/// One summary row: biases, CI coverages and SE columns across runs.
struct ScenarioResult {
  ScenarioConfig config;
  double mu1_true = 0.0;
  double bias_unadjusted = 0.0;
  double bias_method = 0.0;
  double coverage_2s = 0.0;
  double coverage_boot = 0.0;  // NaN when bootstrap disabled
  double se_2s = 0.0;
  double se_boot = 0.0;        // NaN when bootstrap disabled
  double se_maic = 0.0;
  double se_empirical = 0.0;
  std::uint32_t solver_failures = 0;
  bool degenerate = false;     // more than 10% of runs failed calibration
};

struct ComparisonRow {
  std::uint32_t run = 0;
  Method method = Method::entropy;
  double error = 0.0;  // estimate − mu1_true
};

ScenarioTruth generate_target(const ScenarioConfig& config, numkit::RngStream& rng);

TrialData generate_trial(const ScenarioConfig& config, const ScenarioTruth& truth,
                         numkit::RngStream& rng);

/// Full per-scenario pipeline: fixed target, n_runs independent trials,
/// entropy weights with the two-step / naive / bootstrap variances, and the
/// coverage rule |mu1_true − μ̂₁| < 1.96·SE. Deterministic for a given
/// config regardless of max_threads (0 = hardware concurrency).
ScenarioResult run_scenario(const ScenarioConfig& config, int max_threads = 0);

/// Per-run error table for the weight-method comparison; stable balancing
/// uses tolerance d (broadcast per covariate). Runs whose solver fails for
/// a method are dropped for that method.
std::vector<ComparisonRow> run_method_comparison(const ScenarioConfig& config,
                                                 const std::vector<Method>& methods,
                                                 const Vector& tolerance_d,
                                                 int max_threads = 0);

}  // namespace calibra::simulation

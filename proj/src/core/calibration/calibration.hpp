#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "numkit/linalg.hpp"
#include "numkit/optim.hpp"

namespace calibra::calibration {

using numkit::Matrix;
using numkit::Vector;

enum class Method { entropy, stable, empirical_likelihood };

/// Individual patient data from the trial: covariates (no intercept
/// column), outcome, and optional treatment-arm labels. Validated on
/// construction: n >= p+1, all entries finite, every covariate column has
/// nonzero variance.
struct TrialData {
  Matrix x;
  Vector y;
  std::optional<std::vector<int>> arm;

  TrialData(Matrix x_in, Vector y_in,
            std::optional<std::vector<int>> arm_in = std::nullopt);

  std::size_t n() const { return x.rows(); }
  std::size_t p() const { return x.cols(); }
};

/// Aggregate statistics from the population whose IPD is unavailable.
struct TargetSummary {
  Vector xbar0;                       // target covariate means
  std::optional<std::uint64_t> n0;    // target sample size
  std::optional<double> ybar0;        // target mean outcome
  std::optional<double> sigma0_sq;    // target outcome variance
  std::optional<double> mu02;         // anchor-arm mean outcome
};

/// Balancing weights plus solver diagnostics. weights sum to one and are
/// nonnegative; imbalance = Σ wᵢxᵢ − x̄₀.
struct WeightSolution {
  Vector weights;
  Vector dual_params;   // γ (entropy), λ (empirical likelihood), moment multipliers (stable)
  Method method = Method::entropy;
  Vector tolerance_d;   // balance slack; zero vector for the exact methods
  bool converged = false;
  Vector imbalance;
  double ess = 0.0;
};

struct CalibrationProblem {
  TrialData data;
  TargetSummary target;
  Method method = Method::entropy;
  Vector tolerance_d;   // empty means exact balance
  numkit::OptimControl control;
};

/// Entropy balancing: wᵢ ∝ exp(−γᵀxᵢ), γ found by minimizing the dual
/// log(Σ exp(−γᵀxᵢ)) + γᵀx̄₀, then Newton-polished so the balance residual
/// is at rounding level. Equivalent to matching-adjusted indirect
/// comparison weights. Throws InfeasibleError when the target mean is not
/// reachable (hull violation / collinearity).
WeightSolution solve_entropy(const CalibrationProblem& problem);

/// Stable balancing weights: minimize Σ(wᵢ − 1/n)² subject to Σw = 1,
/// w >= 0 and |Σ wᵢxᵢ − x̄₀| <= d elementwise. d = 0 gives the
/// quadratic-distance calibration.
WeightSolution solve_stable(const CalibrationProblem& problem);

/// Empirical likelihood: maximize Σ log wᵢ under exact balance;
/// wᵢ = 1/(n(1 + λᵀuᵢ)) with uᵢ = xᵢ − x̄₀ and λ solved by damped Newton.
WeightSolution solve_empirical_likelihood(const CalibrationProblem& problem);

/// Dispatch on problem.method.
WeightSolution solve(const CalibrationProblem& problem);

/// (Σw)² / Σw²; equals n for uniform weights. Throws std::domain_error for
/// an all-zero weight vector.
double effective_sample_size(const Vector& weights);

}  // namespace calibra::calibration

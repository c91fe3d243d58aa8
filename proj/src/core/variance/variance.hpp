#pragma once

#include <cstdint>

#include "calibration/calibration.hpp"
#include "estimators/estimators.hpp"
#include "numkit/rng.hpp"

namespace calibra::variance {

using calibration::CalibrationProblem;
using calibration::TargetSummary;
using calibration::TrialData;
using calibration::WeightSolution;
using estimators::EstimandSpec;
using numkit::Matrix;
using numkit::Vector;

/// Pieces of the two-step sandwich variance built from the stacked
/// estimating equations of the weight fit and the weighted mean:
/// balance scores S₁ᵢ = wᵢ(xᵢ − x̄₀), outcome scores S₂ᵢ = wᵢ(yᵢ − μ̂₁),
/// their summed Jacobians with respect to the dual parameter, and the
/// corrected per-unit scores Sᵢ = S₂ᵢ − Bᵀ A⁻¹ S₁ᵢ.
struct SandwichTerms {
  Matrix dual_jacobian;     // A, p×p: Σ wᵢxᵢ(xᵢ−x̄₀)ᵀ
  Vector outcome_jacobian;  // B, p:   Σ wᵢxᵢ(yᵢ−μ̂₁)
  Matrix balance_scores;    // S₁ rows, n×p
  Vector outcome_scores;    // S₂, n
  Vector corrected_scores;  // S, n
};

/// Σ wᵢ²(yᵢ − μ̂₁)². Conservative: ignores that the weights balance x.
double naive_variance(const TrialData& data, const WeightSolution& w, double mu1_hat);

/// Σ wᵢ²(yᵢ − m̂(xᵢ))² with caller-supplied fitted values.
double survey_variance(const TrialData& data, const WeightSolution& w,
                       const Vector& fitted);

/// Builds the sandwich terms for converged entropy weights. Checks that the
/// estimating equations hold at the input (Σ S₁ᵢ ≈ 0, Σ S₂ᵢ ≈ 0) and throws
/// std::invalid_argument otherwise; throws SingularError when A is singular.
SandwichTerms sandwich_terms(const TrialData& data, const WeightSolution& w,
                             const TargetSummary& target, double mu1_hat);

/// Model-independent two-step variance Σ Sᵢ². Defined for entropy weights
/// only (the estimating equations are written in the entropy dual).
double two_step_variance(const TrialData& data, const WeightSolution& w,
                         const TargetSummary& target, double mu1_hat);

struct BootstrapSpec {
  std::uint32_t replicates = 50;
  numkit::RngStream rng;
  bool reestimate_weights = true;  // always true; resamples re-solve the weights
};

struct BootstrapResult {
  double variance = 0.0;
  std::uint32_t failures = 0;
};

/// Resamples data rows with replacement, re-solves the calibration problem
/// per replicate and re-estimates the estimand; returns the sample variance
/// over successful replicates and the count of replicates where the solver
/// failed. The target summary is held fixed. Throws BootstrapFailedError
/// when fewer than two replicates succeed.
BootstrapResult bootstrap_variance(const TrialData& data,
                                   const CalibrationProblem& problem,
                                   const EstimandSpec& estimand,
                                   const BootstrapSpec& spec);

/// v_mu1 + σ₀²/n₀ for targets whose outcome summary is random rather than fixed.
double augmented_variance(double v_mu1, const TargetSummary& target);

}  // namespace calibra::variance

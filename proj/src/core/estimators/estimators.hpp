#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "calibration/calibration.hpp"

namespace calibra::estimators {

using calibration::TargetSummary;
using calibration::TrialData;
using calibration::WeightSolution;
using numkit::Vector;

enum class EstimandKind {
  mu1_weighted,          // Σ wᵢyᵢ
  unanchored_delta,      // Σ wᵢyᵢ − ȳ₀
  generalization_delta,  // Σ wᵢyᵢ(Tᵢ/n_treated − (1−Tᵢ)/n_control)
  anchored_delta,        // arm contrast minus the target's own arm contrast
  regression_mu1,        // OLS fit within the trial, predicted at x̄₀
};

struct EstimandSpec {
  EstimandKind kind = EstimandKind::mu1_weighted;
  std::optional<int> anchor_arm_label;  // defaults to 2 for anchored_delta
};

/// Point estimate with per-method standard errors and normal-approximation
/// 95% intervals (estimate ± 1.96·se).
struct EstimateReport {
  double estimate = 0.0;
  EstimandSpec estimand;
  WeightSolution weights_used;
  std::map<std::string, double> se_by_method;
  std::map<std::string, std::pair<double, double>> ci95_by_method;
  double unadjusted_estimate = 0.0;

  void add_se(const std::string& method, double se);
};

double weighted_outcome_mean(const TrialData& data, const WeightSolution& w);
double weighted_outcome_mean(const TrialData& data, const Vector& weights);

double unanchored_delta(const TrialData& data, const WeightSolution& w,
                        const TargetSummary& target);

double generalization_delta(const TrialData& data, const WeightSolution& w);

double anchored_delta(const TrialData& data, const WeightSolution& w,
                      const TargetSummary& target, int anchor_arm_label = 2);

/// Generalized-regression (STC) estimate: OLS of y on [1, x] within the
/// trial, evaluated at the target means. Optionally returns fitted values.
double regression_estimate(const TrialData& data, const TargetSummary& target,
                           Vector* fitted = nullptr);

/// D = Σ wᵢxᵢ − x̄₀.
Vector imbalance_vector(const TrialData& data, const WeightSolution& w,
                        const TargetSummary& target);

/// Dispatch on the estimand kind (regression_mu1 ignores the weights).
double point_estimate(const TrialData& data, const TargetSummary& target,
                      const WeightSolution& w, const EstimandSpec& spec);

/// Same estimand evaluated at uniform weights (regression_mu1 falls back to
/// the trial mean outcome so the unadjusted column is always defined).
double unadjusted_estimate(const TrialData& data, const TargetSummary& target,
                           const EstimandSpec& spec);

}  // namespace calibra::estimators

#include "estimators/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "errors.hpp"

namespace calibra::estimators {

namespace {

void check_length(const TrialData& data, const Vector& w) {
  if (w.size() != data.n())
    throw std::invalid_argument("estimators: weight length differs from data rows");
}

struct ArmCounts {
  std::size_t treated = 0;
  std::size_t other = 0;
};

ArmCounts count_arms(const TrialData& data, int other_label, bool other_is_rest) {
  if (!data.arm) throw std::invalid_argument("estimators: arm labels required");
  ArmCounts c;
  for (int a : *data.arm) {
    if (a == 1)
      ++c.treated;
    else if (other_is_rest || a == other_label)
      ++c.other;
    else
      throw std::invalid_argument("estimators: unexpected arm label");
  }
  if (c.treated == 0 || c.other == 0)
    throw std::invalid_argument("estimators: both arms must be nonempty");
  return c;
}

}  // namespace

void EstimateReport::add_se(const std::string& method, double se) {
  se_by_method[method] = se;
  ci95_by_method[method] = {estimate - 1.96 * se, estimate + 1.96 * se};
}

double weighted_outcome_mean(const TrialData& data, const Vector& weights) {
  check_length(data, weights);
  double s = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) s += weights[i] * data.y[i];
  return s;
}

double weighted_outcome_mean(const TrialData& data, const WeightSolution& w) {
  return weighted_outcome_mean(data, w.weights);
}

double unanchored_delta(const TrialData& data, const WeightSolution& w,
                        const TargetSummary& target) {
  if (!target.ybar0)
    throw MissingSummaryError("unanchored_delta: target mean outcome (ybar0) missing");
  return weighted_outcome_mean(data, w) - *target.ybar0;
}

double generalization_delta(const TrialData& data, const WeightSolution& w) {
  check_length(data, w.weights);
  const ArmCounts c = count_arms(data, 0, /*other_is_rest=*/true);
  double s = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const bool treated = (*data.arm)[i] == 1;
    const double share = treated ? 1.0 / static_cast<double>(c.treated)
                                 : -1.0 / static_cast<double>(c.other);
    s += w.weights[i] * data.y[i] * share;
  }
  return s;
}

double anchored_delta(const TrialData& data, const WeightSolution& w,
                      const TargetSummary& target, int anchor_arm_label) {
  if (!target.ybar0 || !target.mu02)
    throw MissingSummaryError("anchored_delta: target arm means (ybar0, mu02) missing");
  check_length(data, w.weights);
  const ArmCounts c = count_arms(data, anchor_arm_label, /*other_is_rest=*/false);
  double s = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const bool treated = (*data.arm)[i] == 1;
    const double share = treated ? 1.0 / static_cast<double>(c.treated)
                                 : -1.0 / static_cast<double>(c.other);
    s += w.weights[i] * data.y[i] * share;
  }
  return s - (*target.ybar0 - *target.mu02);
}

double regression_estimate(const TrialData& data, const TargetSummary& target,
                           Vector* fitted) {
  const std::size_t n = data.n(), p = data.p();
  numkit::Matrix design(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j) design(i, j + 1) = data.x(i, j);
  }
  const Vector beta = numkit::least_squares(design, data.y);
  if (fitted) {
    fitted->assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double f = beta[0];
      for (std::size_t j = 0; j < p; ++j) f += beta[j + 1] * data.x(i, j);
      (*fitted)[i] = f;
    }
  }
  double mu = beta[0];
  for (std::size_t j = 0; j < p; ++j) mu += beta[j + 1] * target.xbar0[j];
  return mu;
}

Vector imbalance_vector(const TrialData& data, const WeightSolution& w,
                        const TargetSummary& target) {
  check_length(data, w.weights);
  Vector d(data.p(), 0.0);
  for (std::size_t i = 0; i < data.n(); ++i)
    for (std::size_t j = 0; j < data.p(); ++j)
      d[j] += w.weights[i] * data.x(i, j);
  for (std::size_t j = 0; j < data.p(); ++j) d[j] -= target.xbar0[j];
  return d;
}

double point_estimate(const TrialData& data, const TargetSummary& target,
                      const WeightSolution& w, const EstimandSpec& spec) {
  switch (spec.kind) {
    case EstimandKind::mu1_weighted: return weighted_outcome_mean(data, w);
    case EstimandKind::unanchored_delta: return unanchored_delta(data, w, target);
    case EstimandKind::generalization_delta: return generalization_delta(data, w);
    case EstimandKind::anchored_delta:
      return anchored_delta(data, w, target, spec.anchor_arm_label.value_or(2));
    case EstimandKind::regression_mu1: return regression_estimate(data, target);
  }
  throw std::invalid_argument("estimators: unknown estimand");
}

double unadjusted_estimate(const TrialData& data, const TargetSummary& target,
                           const EstimandSpec& spec) {
  WeightSolution uniform;
  uniform.weights.assign(data.n(), 1.0 / static_cast<double>(data.n()));
  uniform.converged = true;
  if (spec.kind == EstimandKind::regression_mu1)
    return weighted_outcome_mean(data, uniform);
  return point_estimate(data, target, uniform, spec);
}

}  // namespace calibra::estimators

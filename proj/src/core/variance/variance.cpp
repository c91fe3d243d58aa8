#include "variance/variance.hpp"

#include <cmath>
#include <stdexcept>

#include "errors.hpp"

namespace calibra::variance {

double naive_variance(const TrialData& data, const WeightSolution& w, double mu1_hat) {
  double v = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double r = data.y[i] - mu1_hat;
    v += w.weights[i] * w.weights[i] * r * r;
  }
  return v;
}

double survey_variance(const TrialData& data, const WeightSolution& w,
                       const Vector& fitted) {
  if (fitted.size() != data.n())
    throw std::invalid_argument("survey_variance: fitted length mismatch");
  double v = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double r = data.y[i] - fitted[i];
    v += w.weights[i] * w.weights[i] * r * r;
  }
  return v;
}

SandwichTerms sandwich_terms(const TrialData& data, const WeightSolution& w,
                             const TargetSummary& target, double mu1_hat) {
  if (w.method != calibration::Method::entropy)
    throw std::invalid_argument("two-step variance is defined for entropy weights only");
  const std::size_t n = data.n(), p = data.p();

  SandwichTerms t;
  t.balance_scores = Matrix(n, p);
  t.outcome_scores.assign(n, 0.0);
  t.dual_jacobian = Matrix(p, p, 0.0);
  t.outcome_jacobian.assign(p, 0.0);

  Vector s1_sum(p, 0.0);
  double s2_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.weights[i];
    const double yres = data.y[i] - mu1_hat;
    t.outcome_scores[i] = wi * yres;
    s2_sum += t.outcome_scores[i];
    for (std::size_t j = 0; j < p; ++j) {
      const double xc = data.x(i, j) - target.xbar0[j];
      t.balance_scores(i, j) = wi * xc;
      s1_sum[j] += wi * xc;
      t.outcome_jacobian[j] += wi * data.x(i, j) * yres;
      for (std::size_t k = 0; k < p; ++k)
        t.dual_jacobian(j, k) += wi * data.x(i, j) * (data.x(i, k) - target.xbar0[k]);
    }
  }

  // The estimating equations must hold at the input solution.
  double scale = 1.0;
  for (std::size_t j = 0; j < p; ++j)
    scale = std::max(scale, std::abs(target.xbar0[j]));
  if (numkit::norm_inf(s1_sum) > 1e-8 * scale || std::abs(s2_sum) > 1e-8)
    throw std::invalid_argument(
        "two-step variance: estimating equations violated at input "
        "(weights not converged or mu1_hat inconsistent)");

  // Sᵢ = S₂ᵢ − Bᵀ A⁻¹ S₁ᵢ, via k solving Aᵀk = B.
  Vector k;
  try {
    k = numkit::solve(numkit::transpose(t.dual_jacobian), t.outcome_jacobian);
  } catch (const SingularError&) {
    throw SingularError("two-step variance: singular Jacobian (collinear balanced covariates)");
  }
  t.corrected_scores.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double corr = 0.0;
    for (std::size_t j = 0; j < p; ++j) corr += k[j] * t.balance_scores(i, j);
    t.corrected_scores[i] = t.outcome_scores[i] - corr;
  }
  return t;
}

double two_step_variance(const TrialData& data, const WeightSolution& w,
                         const TargetSummary& target, double mu1_hat) {
  const SandwichTerms t = sandwich_terms(data, w, target, mu1_hat);
  double v = 0.0;
  for (double s : t.corrected_scores) v += s * s;
  return v;
}

BootstrapResult bootstrap_variance(const TrialData& data,
                                   const CalibrationProblem& problem,
                                   const EstimandSpec& estimand,
                                   const BootstrapSpec& spec) {
  if (spec.replicates < 2)
    throw std::invalid_argument("bootstrap_variance: need at least 2 replicates");
  const std::size_t n = data.n();

  std::vector<double> estimates;
  estimates.reserve(spec.replicates);
  std::uint32_t failures = 0;

  for (std::uint32_t b = 0; b < spec.replicates; ++b) {
    numkit::RngStream rep = spec.rng.child(b);
    Matrix x(n, data.p());
    Vector y(n);
    std::optional<std::vector<int>> arm;
    if (data.arm) arm.emplace(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(rep.uniform_below(n));
      for (std::size_t j = 0; j < data.p(); ++j) x(i, j) = data.x(idx, j);
      y[i] = data.y[idx];
      if (arm) (*arm)[i] = (*data.arm)[idx];
    }

    try {
      TrialData resampled(std::move(x), std::move(y), std::move(arm));
      double est;
      if (estimand.kind == estimators::EstimandKind::regression_mu1) {
        est = estimators::regression_estimate(resampled, problem.target);
      } else {
        CalibrationProblem rp{resampled, problem.target, problem.method,
                              problem.tolerance_d, problem.control};
        const WeightSolution ws = calibration::solve(rp);
        if (!ws.converged) {
          ++failures;
          continue;
        }
        est = estimators::point_estimate(resampled, problem.target, ws, estimand);
      }
      estimates.push_back(est);
    } catch (const InfeasibleError&) {
      ++failures;
    } catch (const SingularError&) {
      ++failures;
    } catch (const std::domain_error&) {
      ++failures;  // degenerate resample (e.g. constant covariate column)
    }
  }

  if (estimates.size() < 2)
    throw BootstrapFailedError("bootstrap_variance: fewer than two replicates succeeded");

  double mean = 0.0;
  for (double e : estimates) mean += e;
  mean /= static_cast<double>(estimates.size());
  double ss = 0.0;
  for (double e : estimates) ss += (e - mean) * (e - mean);
  return BootstrapResult{ss / static_cast<double>(estimates.size() - 1), failures};
}

double augmented_variance(double v_mu1, const TargetSummary& target) {
  if (!target.sigma0_sq || !target.n0)
    throw MissingSummaryError("augmented_variance: sigma0_sq and n0 required");
  return v_mu1 + *target.sigma0_sq / static_cast<double>(*target.n0);
}

}  // namespace calibra::variance

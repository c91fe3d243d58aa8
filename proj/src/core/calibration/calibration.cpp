#include "calibration/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "errors.hpp"
#include "numkit/qp.hpp"

namespace calibra::calibration {

namespace {

constexpr double kBalanceTol = 1e-8;     // raw-scale convergence requirement
constexpr double kGiveUpImbalance = 1e-6;
constexpr double kDualBlowup = 1e6;

struct Standardized {
  Matrix xs;       // centered/scaled covariates
  Vector target;   // x̄₀ on the same scale
  Vector mean;
  Vector sd;
};

// Center and scale by trial means/SDs; conditions the dual Hessian. Weights
// are invariant to this affine map, dual parameters are mapped back by 1/sd.
Standardized standardize(const TrialData& data, const TargetSummary& target) {
  const std::size_t n = data.n(), p = data.p();
  Standardized s;
  s.mean.assign(p, 0.0);
  s.sd.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += data.x(i, j);
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = data.x(i, j) - m;
      v += d * d;
    }
    s.mean[j] = m;
    s.sd[j] = std::sqrt(v / static_cast<double>(n - 1));
  }
  s.xs = Matrix(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      s.xs(i, j) = (data.x(i, j) - s.mean[j]) / s.sd[j];
  s.target.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    s.target[j] = (target.xbar0[j] - s.mean[j]) / s.sd[j];
  return s;
}

Vector raw_imbalance(const TrialData& data, const TargetSummary& target,
                     const Vector& w) {
  Vector d(data.p(), 0.0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double wi = w[i];
    for (std::size_t j = 0; j < data.p(); ++j) d[j] += wi * data.x(i, j);
  }
  for (std::size_t j = 0; j < data.p(); ++j) d[j] -= target.xbar0[j];
  return d;
}

// Softmax of −Xγ with max subtraction.
Vector softmax_weights(const Matrix& xs, const Vector& gamma) {
  const std::size_t n = xs.rows(), p = xs.cols();
  Vector eta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xs.row(i);
    double e = 0.0;
    for (std::size_t j = 0; j < p; ++j) e -= row[j] * gamma[j];
    eta[i] = e;
  }
  const double m = *std::max_element(eta.begin(), eta.end());
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    eta[i] = std::exp(eta[i] - m);
    z += eta[i];
  }
  for (double& e : eta) e /= z;
  return eta;
}

void validate_problem(const CalibrationProblem& problem) {
  if (problem.target.xbar0.size() != problem.data.p())
    throw std::invalid_argument("calibration: target mean length differs from covariate count");
  if (!problem.tolerance_d.empty()) {
    if (problem.tolerance_d.size() != problem.data.p())
      throw std::invalid_argument("calibration: tolerance length differs from covariate count");
    for (double d : problem.tolerance_d) {
      if (d < 0.0) throw std::invalid_argument("calibration: negative balance tolerance");
      if (d != 0.0 && problem.method != Method::stable)
        throw std::invalid_argument("calibration: nonzero tolerance requires the stable method");
    }
  }
}

WeightSolution finish(const CalibrationProblem& problem, Vector w, Vector dual,
                      Method method, bool converged) {
  WeightSolution sol;
  sol.weights = std::move(w);
  sol.dual_params = std::move(dual);
  sol.method = method;
  sol.tolerance_d = problem.tolerance_d.empty()
                        ? Vector(problem.data.p(), 0.0)
                        : problem.tolerance_d;
  sol.imbalance = raw_imbalance(problem.data, problem.target, sol.weights);
  sol.ess = effective_sample_size(sol.weights);
  sol.converged = converged;
  return sol;
}

}  // namespace

TrialData::TrialData(Matrix x_in, Vector y_in, std::optional<std::vector<int>> arm_in)
    : x(std::move(x_in)), y(std::move(y_in)), arm(std::move(arm_in)) {
  const std::size_t n = x.rows(), p = x.cols();
  if (n == 0 || p == 0) throw std::domain_error("trial data: empty matrix");
  if (n < p + 1) throw std::domain_error("trial data: need at least p+1 rows");
  if (y.size() != n) throw std::domain_error("trial data: outcome length mismatch");
  if (arm && arm->size() != n) throw std::domain_error("trial data: arm length mismatch");
  for (double v : x.storage())
    if (!std::isfinite(v)) throw std::domain_error("trial data: non-finite covariate");
  for (double v : y)
    if (!std::isfinite(v)) throw std::domain_error("trial data: non-finite outcome");
  for (std::size_t j = 0; j < p; ++j) {
    const double first = x(0, j);
    bool varies = false;
    for (std::size_t i = 1; i < n && !varies; ++i) varies = x(i, j) != first;
    if (!varies) throw std::domain_error("trial data: constant covariate column");
  }
}

double effective_sample_size(const Vector& weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  if (s2 == 0.0) throw std::domain_error("effective_sample_size: all weights zero");
  return s * s / s2;
}

WeightSolution solve_entropy(const CalibrationProblem& problem) {
  validate_problem(problem);
  const Standardized std_form = standardize(problem.data, problem.target);
  const Matrix& xs = std_form.xs;
  const std::size_t n = xs.rows(), p = xs.cols();

  // Dual objective log(Σ exp(−γᵀxᵢ)) + γᵀx̄₀ and its gradient x̄₀ − Σwᵢxᵢ.
  auto objective = [&](const Vector& gamma) {
    double m = -std::numeric_limits<double>::infinity();
    Vector eta(n);
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0;
      const double* row = xs.row(i);
      for (std::size_t j = 0; j < p; ++j) e -= row[j] * gamma[j];
      eta[i] = e;
      m = std::max(m, e);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(eta[i] - m);
    return m + std::log(z) + numkit::dot(gamma, std_form.target);
  };
  auto gradient = [&](const Vector& gamma) {
    const Vector w = softmax_weights(xs, gamma);
    Vector g = std_form.target;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = xs.row(i);
      for (std::size_t j = 0; j < p; ++j) g[j] -= w[i] * row[j];
    }
    return g;
  };

  numkit::OptimResult res =
      numkit::minimize_smooth(objective, gradient, Vector(p, 0.0), problem.control);
  Vector gamma = res.argmin;

  // Newton polish on the dual: Hessian is the weighted covariance of xs.
  // Drives the balance residual to rounding level so downstream identities
  // (estimating equations, Jacobian symmetrization) hold tightly.
  Vector w = softmax_weights(xs, gamma);
  Vector imb = raw_imbalance(problem.data, problem.target, w);
  for (int pass = 0; pass < 25 && numkit::norm_inf(imb) > 1e-13; ++pass) {
    Vector wx(p, 0.0);
    Matrix h(p, p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = xs.row(i);
      for (std::size_t j = 0; j < p; ++j) wx[j] += w[i] * row[j];
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < p; ++k) h(j, k) += w[i] * row[j] * row[k];
    }
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < p; ++k) h(j, k) -= wx[j] * wx[k];
    Vector resid(p);  // standardized balance residual Σwxs − target
    for (std::size_t j = 0; j < p; ++j) resid[j] = wx[j] - std_form.target[j];
    Vector step;
    try {
      step = numkit::solve(h, resid);
    } catch (const SingularError&) {
      break;
    }
    Vector cand = numkit::add(gamma, step);
    Vector wc = softmax_weights(xs, cand);
    Vector imbc = raw_imbalance(problem.data, problem.target, wc);
    if (numkit::norm_inf(imbc) >= numkit::norm_inf(imb)) break;
    gamma = std::move(cand);
    w = std::move(wc);
    imb = std::move(imbc);
  }

  const double gap = numkit::norm_inf(imb);
  if (numkit::norm2(gamma) > kDualBlowup || gap > kGiveUpImbalance)
    throw InfeasibleError(
        "entropy calibration infeasible: target mean outside the covariate hull "
        "or covariates collinear",
        imb);

  Vector gamma_raw(p);
  for (std::size_t j = 0; j < p; ++j) gamma_raw[j] = gamma[j] / std_form.sd[j];
  return finish(problem, std::move(w), std::move(gamma_raw), Method::entropy,
                gap <= kBalanceTol);
}

WeightSolution solve_stable(const CalibrationProblem& problem) {
  validate_problem(problem);
  const Standardized std_form = standardize(problem.data, problem.target);
  const std::size_t n = problem.data.n(), p = problem.data.p();
  const Vector d = problem.tolerance_d.empty() ? Vector(p, 0.0) : problem.tolerance_d;

  // min Σ(wᵢ−1/n)² = ½ wᵀ(2I)w − (2/n)𝟙ᵀw + const
  numkit::QpProblem qp;
  qp.q_diag.assign(n, 2.0);
  qp.c.assign(n, -2.0 / static_cast<double>(n));
  qp.nonneg.resize(n);
  for (std::size_t i = 0; i < n; ++i) qp.nonneg[i] = i;

  std::size_t n_eq_moments = 0, n_box = 0;
  for (std::size_t j = 0; j < p; ++j) (d[j] == 0.0 ? n_eq_moments : n_box) += 1;

  qp.eq_a = Matrix(1 + n_eq_moments, n);
  qp.eq_b.assign(1 + n_eq_moments, 0.0);
  for (std::size_t i = 0; i < n; ++i) qp.eq_a(0, i) = 1.0;
  qp.eq_b[0] = 1.0;

  qp.box_a = Matrix(n_box, n);
  qp.box_center.assign(n_box, 0.0);
  qp.box_halfwidth.assign(n_box, 0.0);

  std::vector<std::size_t> eq_cols, box_cols;
  std::size_t eq_row = 1, box_row = 0;
  for (std::size_t j = 0; j < p; ++j) {
    if (d[j] == 0.0) {
      for (std::size_t i = 0; i < n; ++i) qp.eq_a(eq_row, i) = std_form.xs(i, j);
      qp.eq_b[eq_row] = std_form.target[j];
      eq_cols.push_back(j);
      ++eq_row;
    } else {
      for (std::size_t i = 0; i < n; ++i) qp.box_a(box_row, i) = std_form.xs(i, j);
      qp.box_center[box_row] = std_form.target[j];
      qp.box_halfwidth[box_row] = d[j] / std_form.sd[j];
      box_cols.push_back(j);
      ++box_row;
    }
  }

  numkit::QpSolution qs;
  try {
    qs = numkit::solve_qp(qp);
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(std::string("stable calibration infeasible: ") + e.what(),
                          raw_imbalance(problem.data, problem.target,
                                        Vector(n, 1.0 / static_cast<double>(n))));
  }

  for (double& wi : qs.x) wi = std::max(wi, 0.0);  // clear −1e−15 rounding

  // Moment multipliers mapped back to the raw covariate scale.
  Vector dual(p, 0.0);
  for (std::size_t k = 0; k < eq_cols.size(); ++k)
    dual[eq_cols[k]] = qs.eq_mult[1 + k] / std_form.sd[eq_cols[k]];
  for (std::size_t k = 0; k < box_cols.size(); ++k)
    dual[box_cols[k]] =
        (qs.box_lower_mult[k] - qs.box_upper_mult[k]) / std_form.sd[box_cols[k]];

  WeightSolution sol = finish(problem, std::move(qs.x), std::move(dual),
                              Method::stable, true);
  for (std::size_t j = 0; j < p; ++j)
    if (std::abs(sol.imbalance[j]) > d[j] + kBalanceTol) sol.converged = false;
  return sol;
}

WeightSolution solve_empirical_likelihood(const CalibrationProblem& problem) {
  validate_problem(problem);
  const Standardized std_form = standardize(problem.data, problem.target);
  const std::size_t n = problem.data.n(), p = problem.data.p();

  // uᵢ = standardized xᵢ − standardized x̄₀
  Matrix u(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j)
      u(i, j) = std_form.xs(i, j) - std_form.target[j];

  auto dual_value = [&](const Vector& lambda, Vector& t) -> double {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double ti = 1.0;
      const double* row = u.row(i);
      for (std::size_t j = 0; j < p; ++j) ti += row[j] * lambda[j];
      t[i] = ti;
      if (ti <= 0.0) return std::numeric_limits<double>::infinity();
      f -= std::log(ti);
    }
    return f;
  };

  Vector lambda(p, 0.0);
  Vector t(n, 1.0);
  double f = dual_value(lambda, t);
  bool converged = false;

  auto weights_from = [&](const Vector& tt) {
    Vector w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / (static_cast<double>(n) * tt[i]);
    return w;
  };

  Vector w = weights_from(t);
  Vector imb = raw_imbalance(problem.data, problem.target, w);

  for (int it = 0; it < problem.control.max_iterations; ++it) {
    if (numkit::norm_inf(imb) <= 1e-11) {
      converged = true;
      break;
    }
    // Newton step on −Σ log(1+λᵀuᵢ): gradient −Σuᵢ/tᵢ, Hessian Σuᵢuᵢᵀ/tᵢ².
    Vector g(p, 0.0);
    Matrix h(p, p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = u.row(i);
      const double inv_t = 1.0 / t[i];
      for (std::size_t j = 0; j < p; ++j) g[j] += row[j] * inv_t;
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < p; ++k)
          h(j, k) += row[j] * row[k] * inv_t * inv_t;
    }
    Vector step;
    try {
      step = numkit::solve(h, g);
    } catch (const SingularError&) {
      throw InfeasibleError("empirical likelihood infeasible: collinear covariates", imb);
    }

    // Step-halving: stay inside {all tᵢ > 0} and do not increase the dual.
    double scale = 1.0;
    bool moved = false;
    Vector tn(n);
    for (int half = 0; half < 60; ++half) {
      Vector cand = lambda;
      numkit::axpy(scale, step, cand);
      const double fc = dual_value(cand, tn);
      if (fc <= f + 1e-14 * std::abs(f)) {
        lambda = std::move(cand);
        t = tn;
        f = fc;
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) break;
    w = weights_from(t);
    imb = raw_imbalance(problem.data, problem.target, w);
  }

  if (!converged) {
    if (numkit::norm2(lambda) > kDualBlowup || numkit::norm_inf(imb) > kGiveUpImbalance)
      throw InfeasibleError(
          "empirical likelihood infeasible: target mean outside the covariate hull",
          imb);
  }

  Vector lambda_raw(p);
  for (std::size_t j = 0; j < p; ++j) lambda_raw[j] = lambda[j] / std_form.sd[j];
  return finish(problem, std::move(w), std::move(lambda_raw),
                Method::empirical_likelihood,
                converged && numkit::norm_inf(imb) <= kBalanceTol);
}

WeightSolution solve(const CalibrationProblem& problem) {
  switch (problem.method) {
    case Method::entropy: return solve_entropy(problem);
    case Method::stable: return solve_stable(problem);
    case Method::empirical_likelihood: return solve_empirical_likelihood(problem);
  }
  throw std::invalid_argument("calibration: unknown method");
}

}  // namespace calibra::calibration

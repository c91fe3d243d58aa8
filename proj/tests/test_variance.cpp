#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "errors.hpp"
#include "estimators/estimators.hpp"
#include "oracles.hpp"
#include "variance/variance.hpp"

using namespace calibra;
using namespace calibra::calibration;
using namespace calibra::variance;
using numkit::Matrix;
using numkit::Vector;

namespace {

CalibrationProblem entropy_problem(const TrialData& d, const Vector& xbar0) {
  TargetSummary t;
  t.xbar0 = xbar0;
  return CalibrationProblem{d, t, Method::entropy, {}, {}};
}

}  // namespace

TEST_CASE("naive variance") {
  Matrix x(2, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  TrialData d(std::move(x), {1.0, 3.0});
  WeightSolution w;
  w.weights = {0.75, 0.25};
  w.converged = true;
  CHECK(naive_variance(d, w, 1.5) == doctest::Approx(0.28125).epsilon(1e-14));

  Matrix xc(3, 1);
  xc(0, 0) = -1;
  xc(1, 0) = 0;
  xc(2, 0) = 1;
  TrialData dc(std::move(xc), {2.0, 2.0, 2.0});
  WeightSolution wu;
  wu.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(naive_variance(dc, wu, 2.0) == doctest::Approx(0.0).epsilon(1e-15));

  // uniform weights reduce to the sample-moment variance over n
  Matrix xu(4, 1);
  xu(0, 0) = 0;
  xu(1, 0) = 1;
  xu(2, 0) = 2;
  xu(3, 0) = 3;
  TrialData du(std::move(xu), {1.0, 2.0, 3.0, 6.0});
  WeightSolution w4;
  w4.weights.assign(4, 0.25);
  const double ybar = 3.0;
  double moment = 0.0;
  for (double yi : {1.0, 2.0, 3.0, 6.0}) moment += (yi - ybar) * (yi - ybar);
  CHECK(naive_variance(du, w4, ybar) == doctest::Approx(moment / 16.0).epsilon(1e-14));
}

TEST_CASE("survey variance") {
  Matrix x(2, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  TrialData d(std::move(x), {1.0, 3.0});
  WeightSolution w;
  w.weights = {0.75, 0.25};
  CHECK(survey_variance(d, w, {1.5, 2.5}) == doctest::Approx(0.15625).epsilon(1e-14));
  // perfect fit
  CHECK(survey_variance(d, w, {1.0, 3.0}) == doctest::Approx(0.0).epsilon(1e-15));
  // fitted == mu1_hat reduces to the naive variance
  CHECK(survey_variance(d, w, {1.5, 1.5}) ==
        doctest::Approx(naive_variance(d, w, 1.5)).epsilon(1e-14));
}

TEST_CASE("two-step variance: exactly determined hand example") {
  Matrix x(2, 1);
  x(0, 0) = 0.0;
  x(1, 0) = 1.0;
  TrialData d(std::move(x), {1.0, 3.0});
  auto pr = entropy_problem(d, {0.25});
  auto w = solve_entropy(pr);
  const double mu = estimators::weighted_outcome_mean(d, w);

  auto terms = sandwich_terms(d, w, pr.target, mu);
  CHECK(terms.dual_jacobian(0, 0) == doctest::Approx(0.1875).epsilon(1e-9));
  CHECK(terms.outcome_jacobian[0] == doctest::Approx(0.375).epsilon(1e-9));
  CHECK(std::abs(terms.corrected_scores[0]) < 1e-12);
  CHECK(std::abs(terms.corrected_scores[1]) < 1e-12);

  CHECK(two_step_variance(d, w, pr.target, mu) < 1e-12);
  CHECK(naive_variance(d, w, mu) == doctest::Approx(0.28125).epsilon(1e-9));
}

TEST_CASE("two-step variance: three-point example against the reference") {
  Matrix x(3, 1);
  x(0, 0) = -1;
  x(1, 0) = 0;
  x(2, 0) = 1;
  TrialData d(std::move(x), {0.0, 1.0, 1.0});
  auto pr = entropy_problem(d, {0.2});
  auto w = solve_entropy(pr);
  const double mu = estimators::weighted_outcome_mean(d, w);
  const double got = two_step_variance(d, w, pr.target, mu);
  const double ref = oracles::two_step_reference(d.x, d.y, w.weights, pr.target.xbar0);
  CHECK(got == doctest::Approx(ref).epsilon(1e-10));
  CHECK(got == doctest::Approx(0.0169).epsilon(1e-2));
}

TEST_CASE("two-step variance: reference transcription on random instances") {
  numkit::RngStream rng(41, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 10 + rng.uniform_below(41);
    const std::size_t p = 1 + rng.uniform_below(3);
    auto inst = oracles::random_interior_instance(rng, n, p);
    CalibrationProblem pr{inst.data, inst.target, Method::entropy, {}, {}};
    auto w = solve_entropy(pr);
    REQUIRE(w.converged);
    const double mu = estimators::weighted_outcome_mean(inst.data, w);
    const double got = two_step_variance(inst.data, w, inst.target, mu);
    const double ref =
        oracles::two_step_reference(inst.data.x, inst.data.y, w.weights, inst.target.xbar0);
    CHECK(got == doctest::Approx(ref).epsilon(1e-10));
  }
}

TEST_CASE("two-step variance: estimating equations are asserted") {
  numkit::RngStream rng(42, 0);
  auto inst = oracles::random_interior_instance(rng, 20, 2);
  CalibrationProblem pr{inst.data, inst.target, Method::entropy, {}, {}};
  auto w = solve_entropy(pr);
  const double mu = estimators::weighted_outcome_mean(inst.data, w);

  // inconsistent mu1_hat
  CHECK_THROWS_AS(two_step_variance(inst.data, w, inst.target, mu + 0.5),
                  std::invalid_argument);
  // unconverged / unbalanced weights
  WeightSolution uniform;
  uniform.weights.assign(20, 0.05);
  uniform.method = Method::entropy;
  const double mu_u = estimators::weighted_outcome_mean(inst.data, uniform);
  CHECK_THROWS_AS(two_step_variance(inst.data, uniform, inst.target, mu_u),
                  std::invalid_argument);
  // non-entropy weights are rejected
  CalibrationProblem ps{inst.data, inst.target, Method::stable, {}, {}};
  auto ws = solve_stable(ps);
  const double mu_s = estimators::weighted_outcome_mean(inst.data, ws);
  CHECK_THROWS_AS(two_step_variance(inst.data, ws, inst.target, mu_s),
                  std::invalid_argument);
}

TEST_CASE("two-step variance: singular Jacobian raises SingularError") {
  // duplicate column: balanced covariates are collinear
  numkit::RngStream rng(43, 0);
  const std::size_t n = 12;
  Matrix x(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = 2.0 * x(i, 0);
  }
  Vector y(n);
  for (double& v : y) v = rng.normal();
  TrialData d(std::move(x), std::move(y));

  // uniform weights balance a target equal to the column means exactly
  Vector means(2, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) means[j] += d.x(i, j) / static_cast<double>(n);
  TargetSummary t;
  t.xbar0 = means;
  WeightSolution w;
  w.weights.assign(n, 1.0 / static_cast<double>(n));
  w.method = Method::entropy;
  w.converged = true;
  const double mu = estimators::weighted_outcome_mean(d, w);
  CHECK_THROWS_AS(two_step_variance(d, w, t, mu), SingularError);
}

TEST_CASE("property: Jacobian sums equal their centered forms at convergence") {
  numkit::RngStream rng(44, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 15 + rng.uniform_below(30);
    const std::size_t p = 1 + rng.uniform_below(3);
    auto inst = oracles::random_interior_instance(rng, n, p);
    CalibrationProblem pr{inst.data, inst.target, Method::entropy, {}, {}};
    auto w = solve_entropy(pr);
    const double mu = estimators::weighted_outcome_mean(inst.data, w);
    auto terms = sandwich_terms(inst.data, w, pr.target, mu);

    Matrix a_centered(p, p, 0.0);
    Vector b_centered(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const double xc_j = inst.data.x(i, j) - inst.target.xbar0[j];
        b_centered[j] += w.weights[i] * xc_j * (inst.data.y[i] - mu);
        for (std::size_t k = 0; k < p; ++k)
          a_centered(j, k) += w.weights[i] * xc_j *
                              (inst.data.x(i, k) - inst.target.xbar0[k]);
      }
    }
    for (std::size_t j = 0; j < p; ++j) {
      CHECK(std::abs(terms.outcome_jacobian[j] - b_centered[j]) <= 1e-10);
      for (std::size_t k = 0; k < p; ++k)
        CHECK(std::abs(terms.dual_jacobian(j, k) - a_centered(j, k)) <= 1e-10);
    }
  }
}

TEST_CASE("property: exact linear outcomes annihilate the two-step variance") {
  numkit::RngStream rng(45, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 15 + rng.uniform_below(35);
    const std::size_t p = 1 + rng.uniform_below(3);
    auto inst = oracles::random_interior_instance(rng, n, p, /*y_noise=*/0.0);
    CalibrationProblem pr{inst.data, inst.target, Method::entropy, {}, {}};
    auto w = solve_entropy(pr);
    const double mu = estimators::weighted_outcome_mean(inst.data, w);
    const double v2s = two_step_variance(inst.data, w, pr.target, mu);
    const double v0 = naive_variance(inst.data, w, mu);
    CHECK(v2s <= 1e-10);
    CHECK(v0 > v2s);  // x variation still sits inside the naive estimate
  }
}

TEST_CASE("property: naive variance dominates two-step on linear-model data") {
  numkit::RngStream rng(46, 0);
  double sum_v0 = 0.0, sum_v2s = 0.0;
  for (int rep = 0; rep < 40; ++rep) {
    auto inst = oracles::random_interior_instance(rng, 60, 2, /*y_noise=*/0.8);
    CalibrationProblem pr{inst.data, inst.target, Method::entropy, {}, {}};
    auto w = solve_entropy(pr);
    const double mu = estimators::weighted_outcome_mean(inst.data, w);
    sum_v0 += naive_variance(inst.data, w, mu);
    sum_v2s += two_step_variance(inst.data, w, pr.target, mu);
  }
  CHECK(sum_v0 / 40.0 > sum_v2s / 40.0);
}

TEST_CASE("bootstrap variance: determinism, constant outcome, failure counting") {
  numkit::RngStream rng(47, 0);
  auto inst = oracles::random_interior_instance(rng, 25, 2);
  CalibrationProblem pr{inst.data, inst.target, Method::entropy, {}, {}};
  estimators::EstimandSpec spec{estimators::EstimandKind::mu1_weighted, std::nullopt};

  BootstrapSpec b1{50, numkit::RngStream(99, 1), true};
  BootstrapSpec b2{50, numkit::RngStream(99, 1), true};
  auto r1 = bootstrap_variance(inst.data, pr, spec, b1);
  auto r2 = bootstrap_variance(inst.data, pr, spec, b2);
  CHECK(r1.variance == r2.variance);
  CHECK(r1.failures == r2.failures);
  CHECK(r1.variance > 0.0);

  // constant outcome: every replicate estimate is the constant
  Matrix xc(20, 1);
  for (int i = 0; i < 20; ++i) xc(i, 0) = rng.normal();
  Vector meansc(1, 0.0);
  for (int i = 0; i < 20; ++i) meansc[0] += xc(i, 0) / 20.0;
  TrialData dc(std::move(xc), Vector(20, 3.3));
  TargetSummary tc;
  tc.xbar0 = meansc;
  CalibrationProblem pc{dc, tc, Method::entropy, {}, {}};
  BootstrapSpec bc{20, numkit::RngStream(7, 7), true};
  auto rc = bootstrap_variance(dc, pc, spec, bc);
  CHECK(rc.variance == doctest::Approx(0.0).epsilon(1e-20));

  // a target near the hull edge fails on many resamples
  Matrix xe(6, 1);
  xe(0, 0) = -1.0;
  xe(1, 0) = -0.5;
  xe(2, 0) = 0.0;
  xe(3, 0) = 0.5;
  xe(4, 0) = 0.9;
  xe(5, 0) = 1.0;
  TrialData de(std::move(xe), {0, 1, 0, 1, 0, 1});
  TargetSummary te;
  te.xbar0 = {0.93};
  CalibrationProblem pe{de, te, Method::entropy, {}, {}};
  BootstrapSpec be{60, numkit::RngStream(5, 5), true};
  auto re = bootstrap_variance(de, pe, spec, be);
  CHECK(re.failures > 0);

  CHECK_THROWS_AS(
      bootstrap_variance(inst.data, pr, spec, BootstrapSpec{1, numkit::RngStream(1, 1), true}),
      std::invalid_argument);
}

TEST_CASE("augmented variance") {
  TargetSummary t;
  t.xbar0 = {0.0};
  t.sigma0_sq = 1.0;
  t.n0 = 2000;
  CHECK(augmented_variance(0.001, t) == doctest::Approx(0.0015).epsilon(1e-14));
  t.sigma0_sq = 0.0;
  CHECK(augmented_variance(0.001, t) == doctest::Approx(0.001).epsilon(1e-14));
  t.sigma0_sq = 1.0;
  t.n0 = 1000000000ULL;
  CHECK(augmented_variance(0.001, t) == doctest::Approx(0.001).epsilon(1e-6));
  t.n0.reset();
  CHECK_THROWS_AS(augmented_variance(0.001, t), MissingSummaryError);
}

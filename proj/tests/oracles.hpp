// Test-side reference implementations, kept independent of the library's
// solver paths: plain bisection for scalar roots, a literal transcription
// of the two-step variance arithmetic with an explicit Gauss-Jordan
// inverse, and random-instance generators built on the library RNG.
#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "calibration/calibration.hpp"
#include "numkit/rng.hpp"

namespace oracles {

using calibra::numkit::Matrix;
using calibra::numkit::Vector;

inline double bisect(const std::function<double(double)>& g, double lo, double hi,
                     double tol = 1e-12, int iters = 200) {
  double flo = g(lo), fhi = g(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if (flo * fhi > 0.0) throw std::runtime_error("bisect: no sign change");
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = g(mid);
    if (std::abs(fmid) == 0.0 || hi - lo < tol) return mid;
    if ((fmid > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Explicit Gauss-Jordan inverse (small p only).
inline std::vector<std::vector<double>> invert(std::vector<std::vector<double>> a) {
  const std::size_t p = a.size();
  std::vector<std::vector<double>> inv(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < p; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw std::runtime_error("invert: singular");
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = a[col][col];
    for (std::size_t j = 0; j < p; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < p; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Reference two-step variance: A = Σ wᵢxᵢ(xᵢ−x̄₀)ᵀ, B = Σ wᵢxᵢ(yᵢ−μ̂),
// per-unit correction (xᵢ−x̄₀)ᵀ A⁻¹ B, result Σ wᵢ²(yᵢ−μ̂−corrᵢ)².
inline double two_step_reference(const Matrix& x, const Vector& y, const Vector& w,
                                 const Vector& xbar0) {
  const std::size_t n = x.rows(), p = x.cols();
  double est = 0.0;
  for (std::size_t i = 0; i < n; ++i) est += w[i] * y[i];

  std::vector<std::vector<double>> a(p, std::vector<double>(p, 0.0));
  std::vector<double> b(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      b[j] += x(i, j) * w[i] * (y[i] - est);
      for (std::size_t k = 0; k < p; ++k)
        a[j][k] += x(i, j) * w[i] * (x(i, k) - xbar0[k]);
    }
  }
  const std::vector<std::vector<double>> ainv = invert(a);
  std::vector<double> ainv_b(p, 0.0);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k < p; ++k) ainv_b[j] += ainv[j][k] * b[k];

  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double corr = 0.0;
    for (std::size_t j = 0; j < p; ++j) corr += (x(i, j) - xbar0[j]) * ainv_b[j];
    const double si = w[i] * (y[i] - est - corr);
    v += si * si;
  }
  return v;
}

struct Instance {
  calibra::calibration::TrialData data;
  calibra::calibration::TargetSummary target;
};

// Random instance whose target mean is a strict convex combination of the
// rows, so every calibration method has an interior solution.
inline Instance random_interior_instance(calibra::numkit::RngStream& rng,
                                         std::size_t n, std::size_t p,
                                         double y_noise = 1.0) {
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) x(i, j) = 0.4 + rng.normal();

  // Dirichlet-ish interior weights via squared normals, floored away from 0.
  Vector wstar(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    wstar[i] = 0.2 + z * z;
    s += wstar[i];
  }
  for (double& v : wstar) v /= s;

  Vector xbar0(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) xbar0[j] += wstar[i] * x(i, j);

  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = 1.0;
    for (std::size_t j = 0; j < p; ++j) v += 0.7 * x(i, j);
    y[i] = v + y_noise * rng.normal();
  }

  calibra::calibration::TargetSummary target;
  target.xbar0 = xbar0;
  return Instance{calibra::calibration::TrialData(std::move(x), std::move(y)),
                  target};
}

// Exactly determined system: n = p+1 rows with a unique positive solution.
inline std::pair<Instance, Vector> exactly_determined_instance(
    calibra::numkit::RngStream& rng, std::size_t p) {
  const std::size_t n = p + 1;
  Matrix x(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) x(i, j) = rng.normal();

  Vector wstar(n);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = rng.normal();
    wstar[i] = 0.3 + z * z;
    s += wstar[i];
  }
  for (double& v : wstar) v /= s;

  Vector xbar0(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) xbar0[j] += wstar[i] * x(i, j);

  Vector y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = rng.normal();

  calibra::calibration::TargetSummary target;
  target.xbar0 = xbar0;
  Instance inst{calibra::calibration::TrialData(std::move(x), std::move(y)), target};
  return {std::move(inst), wstar};
}

}  // namespace oracles

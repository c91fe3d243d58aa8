#include "numkit/optim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "errors.hpp"

namespace calibra::numkit {

namespace {

constexpr double kArmijoSlope = 1e-4;
constexpr double kContraction = 0.5;

// H <- (I - rho s yᵀ) H (I - rho y sᵀ) + rho s sᵀ
void bfgs_update(Matrix& h, const Vector& s, const Vector& y) {
  const std::size_t n = s.size();
  const double ys = dot(y, s);
  if (!(ys > 1e-14 * norm2(y) * norm2(s))) return;  // skip on bad curvature
  const double rho = 1.0 / ys;

  Vector hy = matvec(h, y);
  const double yhy = dot(y, hy);
  // Expanded form: H += rho*(1 + rho*yᵀHy) s sᵀ - rho*(H y sᵀ + s yᵀ H)
  const double c = rho * (1.0 + rho * yhy);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      h(i, j) += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
    }
  }
}

}  // namespace

OptimResult minimize_smooth(const Objective& f, const Gradient& grad,
                            Vector start, const OptimControl& control) {
  const std::size_t n = start.size();

  double fx = f(start);
  Vector gx = grad(start);
  if (!std::isfinite(fx) || !all_finite(gx))
    throw std::domain_error("minimize_smooth: non-finite objective or gradient at start");

  Vector x = std::move(start);
  Matrix h = Matrix::identity(n);

  OptimResult out;
  out.gradient_norm = norm_inf(gx);
  if (out.gradient_norm <= control.gradient_tolerance) {
    out.argmin = x;
    out.objective_value = fx;
    out.converged = true;
    return out;
  }

  int stalled = 0;
  double prev_gnorm = std::numeric_limits<double>::infinity();
  for (int it = 0; it < control.max_iterations; ++it) {
    Vector d = scaled(matvec(h, gx), -1.0);
    double slope = dot(gx, d);
    if (!(slope < 0.0)) {  // not a descent direction: reset to steepest descent
      h = Matrix::identity(n);
      d = scaled(gx, -1.0);
      slope = dot(gx, d);
    }

    double alpha = 1.0;
    Vector xn;
    double fn = fx;
    bool accepted = false;
    for (int ls = 0; ls < 64; ++ls) {
      xn = x;
      axpy(alpha, d, xn);
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + kArmijoSlope * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= kContraction;
    }
    out.iterations = it + 1;
    if (!accepted) break;  // line search stalled; report best iterate

    Vector gn = grad(xn);
    Vector s = sub(xn, x);
    Vector y = sub(gn, gx);
    bfgs_update(h, s, y);

    const double df = std::abs(fx - fn);
    x = std::move(xn);
    gx = std::move(gn);
    const double gnorm = norm_inf(gx);
    fx = fn;

    if (gnorm <= control.gradient_tolerance) {
      out.converged = true;
      break;
    }
    // Objective stall: give up only once the gradient has also stopped
    // contracting, so the superlinear tail of a well-behaved problem is
    // not cut short.
    if (df <= control.relative_tolerance * (std::abs(fx) + control.relative_tolerance) &&
        gnorm > 0.5 * prev_gnorm) {
      if (++stalled >= 3) break;
    } else {
      stalled = 0;
    }
    prev_gnorm = gnorm;
  }

  out.argmin = std::move(x);
  out.objective_value = fx;
  out.gradient_norm = norm_inf(gx);
  if (out.gradient_norm <= control.gradient_tolerance) out.converged = true;
  return out;
}

double find_root_scalar(const std::function<double(double)>& g, double lo,
                        double hi, const OptimControl& control) {
  double a = lo, b = hi;
  double fa = g(a), fb = g(b);
  if (!std::isfinite(fa) || !std::isfinite(fb))
    throw std::domain_error("find_root_scalar: non-finite endpoint value");
  if (fa * fb > 0.0)
    throw BracketError("find_root_scalar: no sign change in bracket");
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;

  // Brent: inverse quadratic interpolation with bisection fallback.
  double c = a, fc = fa;
  double d = b - a, e = d;
  const int maxit = std::max(control.max_iterations, 100);
  for (int it = 0; it < maxit; ++it) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 2.0 * 2.22e-16 * std::abs(b) + 1e-15;
    const double xm = 0.5 * (c - b);
    if (std::abs(fb) <= control.gradient_tolerance || std::abs(xm) <= tol1) return b;

    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = g(b);
  }
  return b;
}

}  // namespace calibra::numkit

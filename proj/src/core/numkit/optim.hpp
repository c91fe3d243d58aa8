#pragma once

#include <functional>

#include "numkit/linalg.hpp"

namespace calibra::numkit {

struct OptimControl {
  int max_iterations = 300;
  double relative_tolerance = 1e-8;
  double gradient_tolerance = 1e-8;
};

struct OptimResult {
  Vector argmin;
  double objective_value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  // max-norm at argmin
};

using Objective = std::function<double(const Vector&)>;
using Gradient = std::function<Vector(const Vector&)>;

/// Quasi-Newton (BFGS inverse-Hessian) minimizer with backtracking Armijo
/// line search. Intended for smooth convex objectives; returns the best
/// iterate with converged=false when the iteration cap or a relative-change
/// stall is hit before the gradient tolerance. Throws std::domain_error when
/// the objective or gradient is non-finite at the start.
OptimResult minimize_smooth(const Objective& f, const Gradient& grad,
                            Vector start, const OptimControl& control = {});

/// Brent root finder on a bracketing interval. Requires g(lo)·g(hi) <= 0
/// (throws BracketError otherwise); stops once |g(root)| falls below
/// control.gradient_tolerance or the bracket collapses to rounding width.
double find_root_scalar(const std::function<double(double)>& g, double lo,
                        double hi, const OptimControl& control = {});

}  // namespace calibra::numkit

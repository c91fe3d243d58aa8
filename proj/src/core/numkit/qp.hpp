#pragma once

#include <cstddef>
#include <vector>

#include "numkit/linalg.hpp"

namespace calibra::numkit {

/// Convex quadratic program
///   min ½ xᵀQx + cᵀx
///   s.t. eq_a x = eq_b
///        x_i >= 0            for i in nonneg
///        |box_a x - box_center| <= box_halfwidth   (elementwise rows)
/// Q must be positive definite. Set q_diag to use a diagonal Q without
/// materializing the dense matrix.
struct QpProblem {
  Matrix q;
  Vector q_diag;
  Vector c;
  Matrix eq_a;
  Vector eq_b;
  std::vector<std::size_t> nonneg;
  Matrix box_a;
  Vector box_center;
  Vector box_halfwidth;
};

struct QpSolution {
  Vector x;
  Vector eq_mult;         // one per equality row, unrestricted sign
  Vector nonneg_mult;     // aligned with QpProblem::nonneg, >= 0
  Vector box_lower_mult;  // one per box row, >= 0
  Vector box_upper_mult;  // one per box row, >= 0
  int iterations = 0;
};

/// Dual active-set solver: starts from the unconstrained minimum, installs
/// the equality constraints, then adds violated inequalities one at a time
/// while keeping the working-set multipliers dual feasible. Terminates
/// finitely for positive definite Q. Throws InfeasibleError naming the
/// violated constraint family when no step can restore feasibility.
QpSolution solve_qp(const QpProblem& problem);

}  // namespace calibra::numkit

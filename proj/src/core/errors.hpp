#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace calibra {

/// Calibration target cannot be reached (convex-hull violation,
/// collinear covariates, or a tolerance too tight to satisfy).
/// Carries the imbalance vector at the point where the solver gave up.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, std::vector<double> imbalance)
      : std::runtime_error(what), imbalance_(std::move(imbalance)) {}
  const std::vector<double>& imbalance() const { return imbalance_; }

 private:
  std::vector<double> imbalance_;
};

/// A summary statistic required by the requested estimand or variance
/// method is absent from the target summary.
class MissingSummaryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear system or factorization is singular / rank deficient.
class SingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Root bracket does not contain a sign change.
class BracketError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Every bootstrap replicate failed (or too few succeeded to form a variance).
class BootstrapFailedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace calibra

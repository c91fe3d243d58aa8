#include "numkit/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "errors.hpp"

namespace calibra::numkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Family { equality, nonneg, box_lower, box_upper };

const char* family_name(Family f) {
  switch (f) {
    case Family::equality: return "equality constraints";
    case Family::nonneg: return "nonnegativity constraints";
    default: return "balance-box constraints";
  }
}

struct Constraint {
  Vector normal;   // oriented so the constraint reads normalᵀx >= rhs
  double rhs = 0.0;
  Family family = Family::equality;
  std::size_t index = 0;  // row / position within its family
  double flip = 1.0;      // equality orientation applied at install time
};

struct Active {
  std::vector<Constraint> cons;
  std::vector<Vector> qinv_normal;  // Q⁻¹ normal, cached at add time
  Vector mult;

  std::size_t size() const { return cons.size(); }
  void add(Constraint c, Vector qinv, double u) {
    cons.push_back(std::move(c));
    qinv_normal.push_back(std::move(qinv));
    mult.push_back(u);
  }
  void drop(std::size_t k) {
    cons.erase(cons.begin() + static_cast<std::ptrdiff_t>(k));
    qinv_normal.erase(qinv_normal.begin() + static_cast<std::ptrdiff_t>(k));
    mult.erase(mult.begin() + static_cast<std::ptrdiff_t>(k));
  }
};

class Solver {
 public:
  explicit Solver(const QpProblem& p) : p_(p), n_(p.c.size()) {
    if (p_.q_diag.empty()) chol_ = cholesky(p_.q);
  }

  QpSolution run() {
    x_ = q_solve(scaled(p_.c, -1.0));

    for (std::size_t k = 0; k < p_.eq_b.size(); ++k) install_equality(k);

    const std::size_t total_ineq = p_.nonneg.size() + 2 * p_.box_center.size();
    const std::size_t cap = 60 * (n_ + total_ineq + 1);
    while (true) {
      if (steps_ > cap) throw std::runtime_error("solve_qp: iteration limit reached");
      std::optional<Constraint> worst = most_violated();
      if (!worst) break;
      process(*worst, /*is_equality=*/false);
    }

    polish();
    return extract();
  }

 private:
  Vector q_solve(const Vector& v) const {
    if (!p_.q_diag.empty()) {
      Vector r(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] / p_.q_diag[i];
      return r;
    }
    return cholesky_solve(chol_, v);
  }

  double violation(const Constraint& c) const { return c.rhs - dot(c.normal, x_); }

  Constraint make_nonneg(std::size_t pos) const {
    Constraint c;
    c.normal.assign(n_, 0.0);
    c.normal[p_.nonneg[pos]] = 1.0;
    c.rhs = 0.0;
    c.family = Family::nonneg;
    c.index = pos;
    return c;
  }

  Constraint make_box(std::size_t row, bool upper) const {
    Constraint c;
    c.normal.assign(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j)
      c.normal[j] = upper ? -p_.box_a(row, j) : p_.box_a(row, j);
    c.rhs = upper ? -(p_.box_center[row] + p_.box_halfwidth[row])
                  : p_.box_center[row] - p_.box_halfwidth[row];
    c.family = upper ? Family::box_upper : Family::box_lower;
    c.index = row;
    return c;
  }

  bool is_active(Family f, std::size_t index) const {
    for (const Constraint& c : active_.cons)
      if (c.family == f && c.index == index) return true;
    return false;
  }

  std::optional<Constraint> most_violated() const {
    std::optional<Constraint> best;
    double best_viol = feas_tol_;
    auto consider = [&](Constraint c) {
      const double v = violation(c);
      if (v > best_viol && !is_active(c.family, c.index)) {
        best_viol = v;
        best = std::move(c);
      }
    };
    for (std::size_t i = 0; i < p_.nonneg.size(); ++i) consider(make_nonneg(i));
    for (std::size_t r = 0; r < p_.box_center.size(); ++r) {
      consider(make_box(r, false));
      consider(make_box(r, true));
    }
    return best;
  }

  void install_equality(std::size_t k) {
    Constraint c;
    c.normal.assign(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) c.normal[j] = p_.eq_a(k, j);
    c.rhs = p_.eq_b[k];
    c.family = Family::equality;
    c.index = k;
    if (violation(c) < 0.0) {  // orient so the residual step is nonnegative
      c.flip = -1.0;
      c.normal = scaled(c.normal, -1.0);
      c.rhs = -c.rhs;
    }
    process(c, /*is_equality=*/true);
  }

  // Core dual active-set step for one incoming constraint.
  void process(const Constraint& incoming, bool is_equality) {
    double u_plus = 0.0;
    while (true) {
      ++steps_;
      Vector qia = q_solve(incoming.normal);
      const std::size_t q = active_.size();

      Vector r;
      Vector z = qia;
      if (q > 0) {
        Matrix m(q, q);
        for (std::size_t i = 0; i < q; ++i)
          for (std::size_t j = 0; j < q; ++j)
            m(i, j) = dot(active_.cons[i].normal, active_.qinv_normal[j]);
        Matrix mchol = cholesky(m);
        Vector ntqia(q);
        for (std::size_t i = 0; i < q; ++i)
          ntqia[i] = dot(active_.cons[i].normal, qia);
        r = cholesky_solve(mchol, ntqia);
        for (std::size_t k = 0; k < q; ++k) axpy(-r[k], active_.qinv_normal[k], z);
      }

      const double ztn = dot(incoming.normal, z);
      const double s = violation(incoming);
      const double zero_tol = 1e-13 * std::max(1.0, dot(incoming.normal, incoming.normal));

      if (s <= feas_tol_) {
        // Satisfied. Equalities still join the working set (they constrain
        // later steps) unless linearly dependent on it.
        if (is_equality && ztn > zero_tol) active_.add(incoming, std::move(qia), u_plus);
        return;
      }

      double t1 = kInf;
      std::size_t block = 0;
      for (std::size_t k = 0; k < q; ++k) {
        if (active_.cons[k].family == Family::equality) continue;
        if (r[k] > 1e-12) {
          const double cand = active_.mult[k] / r[k];
          if (cand < t1) {
            t1 = cand;
            block = k;
          }
        }
      }
      const double t2 = ztn > zero_tol ? s / ztn : kInf;

      if (t1 == kInf && t2 == kInf)
        throw InfeasibleError(std::string("solve_qp: infeasible ") +
                                  family_name(incoming.family),
                              {});

      const double t = std::min(t1, t2);
      for (std::size_t k = 0; k < q; ++k) active_.mult[k] -= t * r[k];
      u_plus += t;

      if (t2 <= t1) {
        axpy(t, z, x_);
        active_.add(incoming, std::move(qia), u_plus);
        return;
      }
      if (t2 != kInf) axpy(t, z, x_);  // partial step, then release the blocker
      active_.drop(block);
    }
  }

  // Re-solve the stationarity system on the final working set; removes the
  // drift accumulated by incremental updates.
  void polish() {
    const std::size_t q = active_.size();
    if (q == 0) return;
    Matrix m(q, q);
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t j = 0; j < q; ++j)
        m(i, j) = dot(active_.cons[i].normal, active_.qinv_normal[j]);
    Vector rhs(q);
    const Vector qinv_c = q_solve(p_.c);
    for (std::size_t i = 0; i < q; ++i)
      rhs[i] = active_.cons[i].rhs + dot(active_.cons[i].normal, qinv_c);
    Vector u;
    try {
      u = cholesky_solve(cholesky(m), rhs);
    } catch (const SingularError&) {
      return;  // keep the incremental iterate
    }
    Vector nx(n_, 0.0);
    for (std::size_t k = 0; k < q; ++k) axpy(u[k], active_.cons[k].normal, nx);
    nx = sub(nx, p_.c);
    x_ = q_solve(nx);
    active_.mult = std::move(u);
  }

  QpSolution extract() const {
    QpSolution out;
    out.x = x_;
    out.eq_mult.assign(p_.eq_b.size(), 0.0);
    out.nonneg_mult.assign(p_.nonneg.size(), 0.0);
    out.box_lower_mult.assign(p_.box_center.size(), 0.0);
    out.box_upper_mult.assign(p_.box_center.size(), 0.0);
    for (std::size_t k = 0; k < active_.size(); ++k) {
      const Constraint& c = active_.cons[k];
      const double u = active_.mult[k];
      switch (c.family) {
        case Family::equality: out.eq_mult[c.index] = c.flip * u; break;
        case Family::nonneg: out.nonneg_mult[c.index] = u; break;
        case Family::box_lower: out.box_lower_mult[c.index] = u; break;
        case Family::box_upper: out.box_upper_mult[c.index] = u; break;
      }
    }
    out.iterations = static_cast<int>(steps_);
    return out;
  }

  const QpProblem& p_;
  std::size_t n_;
  Matrix chol_;
  Vector x_;
  Active active_;
  std::size_t steps_ = 0;
  double feas_tol_ = 1e-11;
};

}  // namespace

QpSolution solve_qp(const QpProblem& problem) {
  if (problem.q_diag.empty() && problem.q.rows() != problem.c.size())
    throw std::invalid_argument("solve_qp: dimension mismatch");
  if (!problem.q_diag.empty() && problem.q_diag.size() != problem.c.size())
    throw std::invalid_argument("solve_qp: dimension mismatch");
  Solver s(problem);
  return s.run();
}

}  // namespace calibra::numkit

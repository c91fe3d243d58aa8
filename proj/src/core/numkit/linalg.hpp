#pragma once

#include <cstddef>
#include <vector>

namespace calibra::numkit {

using Vector = std::vector<double>;

/// Dense row-major matrix. Sized for desk-scale problems (n up to a few
/// thousand, p small); no sparsity, no views.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  const double* row(std::size_t i) const { return data_.data() + i * cols_; }
  double* row(std::size_t i) { return data_.data() + i * cols_; }

  const std::vector<double>& storage() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Vector helpers.
double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);
double norm_inf(const Vector& a);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double k);
// y += k * x
void axpy(double k, const Vector& x, Vector& y);
bool all_finite(const Vector& a);

// Matrix products.
Vector matvec(const Matrix& a, const Vector& x);
// aᵀ x
Vector tmatvec(const Matrix& a, const Vector& x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// LU factorization with partial pivoting.
struct LuFactor {
  Matrix lu;
  std::vector<std::size_t> piv;
};

LuFactor lu_factor(Matrix a);                         // throws SingularError
Vector lu_solve(const LuFactor& f, Vector b);
Vector solve(const Matrix& a, const Vector& b);       // LU convenience

/// Cholesky factor (lower triangular) of an SPD matrix. Throws SingularError
/// when a pivot is not strictly positive.
Matrix cholesky(const Matrix& a);
Vector cholesky_solve(const Matrix& chol_lower, Vector b);

/// Least squares via Householder QR. Throws SingularError when a diagonal of
/// R falls below rank_tol * (largest column norm of a).
Vector least_squares(const Matrix& a, const Vector& b, double rank_tol = 1e-10);

}  // namespace calibra::numkit

#include "evsn/matrix.hpp"

#include <cmath>

#include "evsn/error.hpp"

namespace evsn {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    fail(ErrorKind::shape, "matrix " + shape_string() + " given " +
                               std::to_string(values_.size()) + " values");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Matrix::fill(double value) {
  for (double& v : values_) v = value;
}

bool Matrix::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::shape, std::string(what) + ": shapes " + a.shape_string() +
                               " and " + b.shape_string() + " differ");
  }
}

namespace {

void check_inner(const char* op, std::size_t lhs, std::size_t rhs, const Matrix& a,
                 const Matrix& b) {
  if (lhs != rhs) {
    fail(ErrorKind::shape, std::string(op) + ": cannot multiply " + a.shape_string() +
                               " by " + b.shape_string());
  }
}

void check_out(const Matrix& out, std::size_t rows, std::size_t cols) {
  if (out.rows() != rows || out.cols() != cols) {
    fail(ErrorKind::shape, "matmul accumulator has shape " + out.shape_string() +
                               ", expected " + std::to_string(rows) + "x" +
                               std::to_string(cols));
  }
}

}  // namespace

void matmul_add(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner("matmul", a.cols(), b.rows(), a, b);
  check_out(out, a.rows(), b.cols());
  const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  // i-k-j order: each out(i, j) still receives its terms in ascending k.
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = pc + i * m;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = pa[i * inner + k];
      const double* brow = pb + k * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
    }
  }
}

void matmul_at_b_add(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner("matmul_at_b", a.rows(), b.rows(), a, b);
  check_out(out, a.cols(), b.cols());
  const std::size_t inner = a.rows(), n = a.cols(), m = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  for (std::size_t r = 0; r < inner; ++r) {
    const double* arow = pa + r * n;
    const double* brow = pb + r * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double ari = arow[i];
      double* crow = pc + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += ari * brow[j];
    }
  }
}

void matmul_a_bt_add(const Matrix& a, const Matrix& b, Matrix& out) {
  check_inner("matmul_a_bt", a.cols(), b.cols(), a, b);
  check_out(out, a.rows(), b.rows());
  const std::size_t n = a.rows(), inner = a.cols(), m = b.rows();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = pa + i * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = pb + j * inner;
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      pc[i * m + j] += acc;
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner("matmul", a.cols(), b.rows(), a, b);
  Matrix out(a.rows(), b.cols());
  matmul_add(a, b, out);
  return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  check_inner("matmul_at_b", a.rows(), b.rows(), a, b);
  Matrix out(a.cols(), b.cols());
  matmul_at_b_add(a, b, out);
  return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  check_inner("matmul_a_bt", a.cols(), b.cols(), a, b);
  Matrix out(a.rows(), b.rows());
  matmul_a_bt_add(a, b, out);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace evsn

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace forcelr {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Sized for filter-bank analysis
/// (hundreds of rows at most), not for general-purpose linear algebra.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> data)
      : rows(r), cols(c), a(std::move(data)) {
    if (a.size() != rows * cols)
      throw std::invalid_argument("Mat: data length does not match shape");
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {a.data() + i * cols, cols};
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

/// C = A * B
inline Mat matmul(const Mat& A, const Mat& B) {
  if (A.cols != B.rows) throw std::invalid_argument("matmul: shape mismatch");
  Mat C(A.rows, B.cols);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
    }
  return C;
}

/// C = A^T * B
inline Mat matmul_tn(const Mat& A, const Mat& B) {
  if (A.rows != B.rows) throw std::invalid_argument("matmul_tn: shape mismatch");
  Mat C(A.cols, B.cols);
  for (std::size_t k = 0; k < A.rows; ++k)
    for (std::size_t i = 0; i < A.cols; ++i) {
      const double aki = A(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < B.cols; ++j) C(i, j) += aki * B(k, j);
    }
  return C;
}

inline Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
  return T;
}

inline double trace(const Mat& A) {
  if (A.rows != A.cols) throw std::invalid_argument("trace: matrix must be square");
  double s = 0.0;
  for (std::size_t i = 0; i < A.rows; ++i) s += A(i, i);
  return s;
}

inline double frobenius_norm(const Mat& A) {
  double s = 0.0;
  for (double v : A.a) s += v * v;
  return std::sqrt(s);
}

inline double frobenius_sq_diff(const Mat& A, const Mat& B) {
  if (A.rows != B.rows || A.cols != B.cols)
    throw std::invalid_argument("frobenius_sq_diff: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < A.a.size(); ++i) {
    const double d = A.a[i] - B.a[i];
    s += d * d;
  }
  return s;
}

}  // namespace forcelr

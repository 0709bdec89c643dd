#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/filter_bank.hpp"
#include "forcelr/matrix.hpp"

namespace forcelr {

/// Uncentered covariance W*W^T / (cols - 1). No mean subtraction: the rank
/// analysis downstream is defined on exactly this matrix, and centering
/// would change every rank number it produces.
inline Mat covariance(const FilterMatrix& mat) {
  if (mat.cols < 2) throw std::invalid_argument("covariance: degenerate divisor");
  const double inv = 1.0 / double(mat.cols - 1);
  Mat c(mat.rows, mat.rows);
  for (std::size_t i = 0; i < mat.rows; ++i) {
    const auto ri = mat.row(i);
    for (std::size_t j = i; j < mat.rows; ++j) {
      const double v = dot(ri, mat.row(j)) * inv;
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

struct EigenDecomposition {
  Vec eigenvalues;   // sorted descending
  Mat eigenvectors;  // column k pairs with eigenvalues[k]
};

struct SymEigenOptions {
  double tol = 1e-12;       // off-diagonal Frobenius residual, relative to ||A||_F
  int max_sweeps = 64;
  double psd_clamp_tol = 0.0;  // eigenvalues in [-psd_clamp_tol, 0) are set to 0
};

namespace detail {

inline void check_symmetric(const Mat& A) {
  const double scale = std::max(1.0, frobenius_norm(A));
  for (std::size_t i = 0; i < A.rows; ++i)
    for (std::size_t j = i + 1; j < A.cols; ++j)
      if (std::abs(A(i, j) - A(j, i)) > 1e-10 * scale)
        throw std::invalid_argument("sym_eigen: input not symmetric");
}

inline double offdiag_norm(const Mat& B) {
  double s = 0.0;
  for (std::size_t p = 0; p < B.rows; ++p)
    for (std::size_t q = p + 1; q < B.cols; ++q) s += B(p, q) * B(p, q);
  return std::sqrt(2.0 * s);
}

/// Canonical eigenvector sign: the entry of largest magnitude is positive.
/// Keeps decompositions reproducible across refactors of the sweep order.
inline void fix_column_signs(Mat& V) {
  for (std::size_t j = 0; j < V.cols; ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < V.rows; ++i) {
      const double m = std::abs(V(i, j));
      if (m > best) {
        best = m;
        arg = i;
      }
    }
    if (V(arg, j) < 0.0)
      for (std::size_t i = 0; i < V.rows; ++i) V(i, j) = -V(i, j);
  }
}

}  // namespace detail

/// Full spectrum of a symmetric matrix by cyclic Jacobi rotations.
/// Quadratically convergent and bitwise deterministic for a fixed input;
/// ample for the layer-sized matrices this library ever sees.
inline EigenDecomposition sym_eigen(const Mat& A,
                                    const SymEigenOptions& opts = {}) {
  if (A.rows != A.cols || A.rows == 0)
    throw std::invalid_argument("sym_eigen: matrix must be square and non-empty");
  detail::check_symmetric(A);

  const std::size_t n = A.rows;
  Mat B = A;
  Mat V = Mat::identity(n);
  const double stop = opts.tol * std::max(1.0, frobenius_norm(A));

  int sweep = 0;
  for (; sweep < opts.max_sweeps; ++sweep) {
    if (detail::offdiag_norm(B) <= stop) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double bpq = B(p, q);
        if (bpq == 0.0) continue;
        const double tau = (B(q, q) - B(p, p)) / (2.0 * bpq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double bkp = B(k, p), bkq = B(k, q);
          B(k, p) = c * bkp - s * bkq;
          B(k, q) = s * bkp + c * bkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double bpk = B(p, k), bqk = B(q, k);
          B(p, k) = c * bpk - s * bqk;
          B(q, k) = s * bpk + c * bqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  const double residual = detail::offdiag_norm(B);
  if (residual > stop)
    throw std::runtime_error(
        "sym_eigen: no convergence after " + std::to_string(opts.max_sweeps) +
        " sweeps, off-diagonal residual " + std::to_string(residual));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return B(a, a) > B(b, b);
  });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Mat(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    double lambda = B(order[k], order[k]);
    if (lambda < 0.0 && lambda >= -opts.psd_clamp_tol) lambda = 0.0;
    out.eigenvalues[k] = lambda;
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = V(i, order[k]);
  }
  detail::fix_column_signs(out.eigenvectors);
  return out;
}

struct SvdDecomposition {
  Vec singular_values;  // descending, length = rows
  Mat u;                // rows x rows, orthogonal
  Mat vt;               // rows x cols; unit rows where sigma > 0, zero rows otherwise
};

struct SvdOptions {
  double tol = 1e-14;  // |row_i . row_j| <= tol * ||row_i|| * ||row_j||
  int max_sweeps = 60;
};

/// Thin SVD W = U * diag(sigma) * V^T by one-sided (Hestenes) Jacobi applied
/// to the rows of W. Works directly on W without forming the Gram matrix, so
/// it is an algebraically independent route from the covariance eigensolver.
inline SvdDecomposition jacobi_svd(const Mat& W, const SvdOptions& opts = {}) {
  if (W.rows == 0 || W.cols == 0)
    throw std::invalid_argument("jacobi_svd: empty matrix");
  const std::size_t n = W.rows;
  Mat B = W;
  Mat U = Mat::identity(n);

  int sweep = 0;
  bool dirty = true;
  for (; sweep < opts.max_sweeps && dirty; ++sweep) {
    dirty = false;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double alpha = dot(B.row(i), B.row(i));
        const double beta = dot(B.row(j), B.row(j));
        const double gamma = dot(B.row(i), B.row(j));
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= opts.tol * std::sqrt(alpha * beta)) continue;
        dirty = true;

        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        auto bi = B.row(i), bj = B.row(j);
        for (std::size_t k = 0; k < B.cols; ++k) {
          const double x = bi[k], y = bj[k];
          bi[k] = c * x - s * y;
          bj[k] = s * x + c * y;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double x = U(k, i), y = U(k, j);
          U(k, i) = c * x - s * y;
          U(k, j) = s * x + c * y;
        }
      }
    }
  }
  if (dirty)
    throw std::runtime_error("jacobi_svd: no convergence after " +
                             std::to_string(opts.max_sweeps) + " sweeps");

  Vec sigma(n);
  for (std::size_t i = 0; i < n; ++i) sigma[i] = norm2(B.row(i));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sigma[a] > sigma[b];
  });

  SvdDecomposition out;
  out.singular_values.resize(n);
  out.u = Mat(n, n);
  out.vt = Mat(n, W.cols);
  const double sigma_max = sigma[order[0]];
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.singular_values[k] = sigma[src];
    for (std::size_t r = 0; r < n; ++r) out.u(r, k) = U(r, src);
    if (sigma[src] > sigma_max * 1e-300 && sigma[src] > 0.0) {
      const double inv = 1.0 / sigma[src];
      for (std::size_t c = 0; c < W.cols; ++c) out.vt(k, c) = B(src, c) * inv;
    }
  }
  return out;
}

}  // namespace forcelr

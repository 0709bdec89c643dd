#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "forcelr/filter_bank.hpp"
#include "forcelr/kmeans.hpp"
#include "forcelr/linalg.hpp"
#include "forcelr/matrix.hpp"
#include "forcelr/rng.hpp"

namespace forcelr {

enum class LowRankMethod { PCA, SVD, KMeans };

constexpr double kDefaultTau = 0.05;

struct LowRankFactorization {
  LowRankMethod method = LowRankMethod::PCA;
  std::size_t rank = 0;
  Mat basis;        // M x D, rows are flattened basis filters
  Mat combination;  // N x M, row n holds filter n's coefficients
  Vec spectrum;     // length N non-increasing; empty for KMeans
  double reconstruction_error_pct = 0.0;  // squared-Frobenius error ratio
};

inline Mat reconstruct(const LowRankFactorization& f) {
  return matmul(f.combination, f.basis);
}

namespace detail {

inline void check_rank(std::size_t m, std::size_t n) {
  if (m == 0 || m > n)
    throw std::invalid_argument("factorize: rank must be in [1, n_filters]");
}

/// e_M / e_0 with the tail clamped at zero; 0 for an all-zero spectrum.
inline double tail_ratio(const Vec& spectrum, std::size_t m) {
  double total = 0.0;
  for (double v : spectrum) total += v;
  if (!(total > 0.0)) return 0.0;
  double tail = 0.0;
  for (std::size_t i = m; i < spectrum.size(); ++i) tail += spectrum[i];
  return std::max(tail, 0.0) / total;
}

inline Vec curve_from_spectrum(const Vec& spectrum) {
  Vec curve(spectrum.size() + 1);
  for (std::size_t m = 0; m <= spectrum.size(); ++m) curve[m] = tail_ratio(spectrum, m);
  return curve;
}

inline Vec pca_spectrum(const FilterMatrix& mat) {
  const Mat c = covariance(mat);
  SymEigenOptions opts;
  opts.psd_clamp_tol = 1e-9 * trace(c);
  return sym_eigen(c, opts).eigenvalues;
}

}  // namespace detail

/// Least-squares rank-M projection: combination = top-M eigenvectors P of the
/// uncentered covariance, basis = P^T W. The orthonormal factor goes into the
/// combination so the 1x1 layer built from it stays well-conditioned.
inline LowRankFactorization pca_factorize(const FilterMatrix& mat, std::size_t rank) {
  detail::check_rank(rank, mat.rows);
  const Mat c = covariance(mat);
  SymEigenOptions opts;
  opts.psd_clamp_tol = 1e-9 * trace(c);
  const EigenDecomposition eig = sym_eigen(c, opts);

  LowRankFactorization f;
  f.method = LowRankMethod::PCA;
  f.rank = rank;
  f.spectrum = eig.eigenvalues;
  f.combination = Mat(mat.rows, rank);
  for (std::size_t i = 0; i < mat.rows; ++i)
    for (std::size_t k = 0; k < rank; ++k) f.combination(i, k) = eig.eigenvectors(i, k);
  f.basis = matmul_tn(f.combination, mat.as_mat());
  f.reconstruction_error_pct = detail::tail_ratio(f.spectrum, rank);
  return f;
}

/// Truncated SVD W ~ U_M S_M V_M^T; combination = U_M, basis = S_M V_M^T.
/// Same subspace as pca_factorize but reached without forming the covariance,
/// which is what makes the two error curves a meaningful cross-check.
inline LowRankFactorization svd_factorize(const FilterMatrix& mat, std::size_t rank) {
  detail::check_rank(rank, mat.rows);
  const SvdDecomposition svd = jacobi_svd(mat.as_mat());

  LowRankFactorization f;
  f.method = LowRankMethod::SVD;
  f.rank = rank;
  f.spectrum.resize(mat.rows);
  for (std::size_t i = 0; i < mat.rows; ++i)
    f.spectrum[i] = svd.singular_values[i] * svd.singular_values[i];
  f.combination = Mat(mat.rows, rank);
  for (std::size_t i = 0; i < mat.rows; ++i)
    for (std::size_t k = 0; k < rank; ++k) f.combination(i, k) = svd.u(i, k);
  f.basis = Mat(rank, mat.cols);
  for (std::size_t k = 0; k < rank; ++k)
    for (std::size_t j = 0; j < mat.cols; ++j)
      f.basis(k, j) = svd.singular_values[k] * svd.vt(k, j);
  f.reconstruction_error_pct = detail::tail_ratio(f.spectrum, rank);
  return f;
}

/// Centroid substitution: basis = cluster centroids, combination = one-hot
/// membership. No coefficient refit.
inline LowRankFactorization kmeans_factorize(const FilterMatrix& mat, std::size_t rank,
                                             std::uint64_t seed, int max_iters = 100) {
  detail::check_rank(rank, mat.rows);
  const KMeansResult km = kmeans_cluster(mat.as_mat(), rank, seed, max_iters);

  LowRankFactorization f;
  f.method = LowRankMethod::KMeans;
  f.rank = rank;
  f.basis = km.centroids;
  f.combination = Mat(mat.rows, rank);
  for (std::size_t i = 0; i < mat.rows; ++i) f.combination(i, km.assignment[i]) = 1.0;
  const double total = dot(mat.data, mat.data);
  f.reconstruction_error_pct = total > 0.0 ? km.sse / total : 0.0;
  return f;
}

/// Error curve e_M/e_0 for M = 0..N (index = M). The single-column case has
/// no covariance spectrum; one basis filter already reconstructs it exactly.
inline Vec pca_error_curve(const FilterMatrix& mat) {
  if (mat.cols < 2) {
    double total = 0;
    for (double v : mat.data) total += v * v;
    Vec curve(mat.rows + 1, 0.0);
    if (total >= 1e-15) curve[0] = 1.0;
    return curve;
  }
  return detail::curve_from_spectrum(detail::pca_spectrum(mat));
}

inline Vec svd_error_curve(const FilterMatrix& mat) {
  const SvdDecomposition svd = jacobi_svd(mat.as_mat());
  Vec spectrum(mat.rows);
  for (std::size_t i = 0; i < mat.rows; ++i)
    spectrum[i] = svd.singular_values[i] * svd.singular_values[i];
  return detail::curve_from_spectrum(spectrum);
}

/// k-means error curve. Each rank M takes the better of a fresh seeded run
/// and a Lloyd refinement warm-started from the rank M-1 centroids plus the
/// row they miss worst; the warm start can only improve on rank M-1, which
/// makes the curve non-increasing (fresh k-means++ alone does not).
inline Vec kmeans_error_curve(const FilterMatrix& mat, std::uint64_t seed,
                              int max_iters = 100) {
  const Mat rows = mat.as_mat();
  const double total = dot(mat.data, mat.data);
  Vec curve(mat.rows + 1, 0.0);
  if (!(total > 0.0)) return curve;
  curve[0] = 1.0;

  Mat prev_centroids;
  for (std::size_t m = 1; m <= mat.rows; ++m) {
    KMeansResult best =
        kmeans_cluster(rows, m, derive_seed(seed, "kmeans-curve", m), max_iters);
    if (m > 1) {
      Mat start(m, mat.cols);
      std::copy(prev_centroids.a.begin(), prev_centroids.a.end(), start.a.begin());
      std::size_t far = 0;
      double far_d2 = -1.0;
      for (std::size_t i = 0; i < rows.rows; ++i) {
        double d2 = 0.0;
        detail::nearest_centroid(prev_centroids, rows.row(i), d2);
        if (d2 > far_d2) {
          far_d2 = d2;
          far = i;
        }
      }
      std::copy_n(rows.row(far).data(), mat.cols, start.row(m - 1).data());
      KMeansResult warm = kmeans_refine(rows, std::move(start), max_iters);
      if (warm.sse < best.sse) best = std::move(warm);
    }
    curve[m] = best.sse / total;
    prev_centroids = std::move(best.centroids);
  }
  return curve;
}

namespace detail {

inline void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("select_rank: tau must be in (0, 1)");
}

}  // namespace detail

/// Minimal M with e_M/e_0 <= tau; an all-zero spectrum (e_0 below 1e-15)
/// selects M = 1.
inline std::size_t select_rank(const Vec& spectrum, double tau) {
  detail::check_tau(tau);
  if (spectrum.empty()) throw std::invalid_argument("select_rank: empty spectrum");
  double total = 0.0;
  for (double v : spectrum) total += v;
  if (total < 1e-15) return 1;
  double tail = total;
  for (std::size_t m = 1; m < spectrum.size(); ++m) {
    tail -= spectrum[m - 1];
    if (std::max(tail, 0.0) / total <= tau) return m;
  }
  return spectrum.size();
}

/// Same selection on a precomputed error curve (index = M, length N+1).
inline std::size_t select_rank_curve(const Vec& error_curve, double tau) {
  detail::check_tau(tau);
  if (error_curve.size() < 2) throw std::invalid_argument("select_rank: curve too short");
  if (error_curve[0] < 1e-15) return 1;
  for (std::size_t m = 1; m + 1 < error_curve.size(); ++m)
    if (error_curve[m] <= tau) return m;
  return error_curve.size() - 1;
}

/// Rank of a filter matrix under the default principal-direction spectrum.
/// A single-column matrix (1x1 filters over one channel) reconstructs exactly
/// from one basis filter, so its rank is 1 without a spectrum.
inline std::size_t pca_rank(const FilterMatrix& mat, double tau) {
  detail::check_tau(tau);
  if (mat.cols < 2) return 1;
  return select_rank(detail::pca_spectrum(mat), tau);
}

struct DecomposedLayer {
  FilterBank basis_layer;    // M (or g*M) filters of shape C x H x W
  FilterBank combine_layer;  // N filters of shape M x 1 x 1
};

/// Splits a grouped bank given one factorization per group, each computed on
/// that group's row slice. All groups must share the same rank so the two
/// resulting banks are well-formed grouped convolutions.
inline DecomposedLayer split_layer(const FilterBank& bank,
                                   const std::vector<LowRankFactorization>& per_group) {
  bank.validate();
  if (per_group.size() != bank.groups)
    throw std::invalid_argument("split_layer: need one factorization per group");
  const std::size_t g = bank.groups, ng = bank.n_filters / g;
  const std::size_t dsz = bank.filter_size(), m = per_group[0].rank;
  for (const auto& f : per_group) {
    if (f.rank != m) throw std::invalid_argument("split_layer: per-group ranks differ");
    if (f.basis.rows != m || f.basis.cols != dsz || f.combination.rows != ng ||
        f.combination.cols != m)
      throw std::invalid_argument("split_layer: factorization shape mismatch");
  }

  DecomposedLayer out;
  out.basis_layer.data.reserve(g * m * dsz);
  for (const auto& f : per_group)
    out.basis_layer.data.insert(out.basis_layer.data.end(), f.basis.a.begin(),
                                f.basis.a.end());
  out.basis_layer.n_filters = g * m;
  out.basis_layer.channels = bank.channels;
  out.basis_layer.height = bank.height;
  out.basis_layer.width = bank.width;
  out.basis_layer.groups = g;
  out.basis_layer.validate();

  out.combine_layer.data.reserve(bank.n_filters * m);
  for (const auto& f : per_group)
    out.combine_layer.data.insert(out.combine_layer.data.end(), f.combination.a.begin(),
                                  f.combination.a.end());
  out.combine_layer.n_filters = bank.n_filters;
  out.combine_layer.channels = m;
  out.combine_layer.height = 1;
  out.combine_layer.width = 1;
  out.combine_layer.groups = g;
  out.combine_layer.validate();
  return out;
}

inline DecomposedLayer split_layer(const FilterBank& bank,
                                   const LowRankFactorization& fact) {
  if (bank.groups != 1)
    throw std::invalid_argument("split_layer: grouped bank needs per-group factorizations");
  return split_layer(bank, std::vector<LowRankFactorization>{fact});
}

/// Multiply-count ratio of the original layer to the decomposed pair.
/// The output-plane factor cancels; it stays in the signature because the
/// call sites have it and the formula reads like the cost model.
inline double theoretical_speedup(std::size_t n, std::size_t c, std::size_t h,
                                  std::size_t w, std::size_t h_out, std::size_t w_out,
                                  std::size_t m) {
  if (n == 0 || c == 0 || h == 0 || w == 0 || h_out == 0 || w_out == 0 || m == 0)
    throw std::invalid_argument("theoretical_speedup: all arguments must be positive");
  const double chw = double(c) * double(h) * double(w);
  const double hw = double(h_out) * double(w_out);
  return (double(n) * chw * hw) / (double(m) * chw * hw + double(n) * double(m) * hw);
}

/// Largest real rank with speedup above 1: N*CHW / (CHW + N).
inline double break_even_rank(std::size_t n, std::size_t c, std::size_t h,
                              std::size_t w) {
  if (n == 0 || c == 0 || h == 0 || w == 0)
    throw std::invalid_argument("break_even_rank: all arguments must be positive");
  const double chw = double(c) * double(h) * double(w);
  return double(n) * chw / (chw + double(n));
}

}  // namespace forcelr

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "forcelr/filter_bank.hpp"
#include "forcelr/matrix.hpp"

namespace forcelr {

enum class ForceKind { L2Force, L1Force };

/// FilterNorm scales each filter's regularization step by its length so the
/// induced rotation angle is length-invariant; ReciprocalNorm divides by the
/// length instead and exists only for the qualitative comparison experiment.
enum class StepScaler { FilterNorm, ReciprocalNorm };

constexpr double kDefaultEpsDist = 1e-8;

struct ForceConfig {
  ForceKind kind = ForceKind::L2Force;
  double lambda_s = 0.0;  // > 0 pulls filters together, < 0 pushes them apart
  double eps_dist = kDefaultEpsDist;
  double eps_norm = kDefaultEpsNorm;
  StepScaler scaler = StepScaler::FilterNorm;

  void validate() const {
    if (!(eps_dist > 0.0) || !(eps_norm > 0.0))
      throw std::invalid_argument("ForceConfig: eps_dist and eps_norm must be positive");
    if (!std::isfinite(lambda_s))
      throw std::invalid_argument("ForceConfig: lambda_s must be finite");
  }
};

struct ForceGradient {
  Mat delta;           // N x D, row i is the regularization step for filter i
  Vec perp_residuals;  // |delta_i . unit(W_i)| per row; 0 for degenerate rows
};

/// Force exerted on unit filter w_i by unit filter w_j.
inline Vec pairwise_force(std::span<const double> w_i, std::span<const double> w_j,
                          ForceKind kind, double eps_dist = kDefaultEpsDist) {
  if (w_i.size() != w_j.size())
    throw std::invalid_argument("pairwise_force: dimension mismatch");
  Vec f(w_i.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = w_j[k] - w_i[k];
  if (kind == ForceKind::L1Force) {
    const double d = norm2(f);
    if (d < eps_dist) {
      std::fill(f.begin(), f.end(), 0.0);  // coincident filters: zero is in the subgradient
    } else {
      const double inv = 1.0 / d;
      for (double& v : f) v *= inv;
    }
  }
  return f;
}

namespace detail {

/// Removes the component of s along unit vector u, then scales. Writes into out.
inline void project_and_scale(std::span<const double> s, std::span<const double> u,
                              double scale, std::span<double> out) {
  const double along = dot(s, u);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = scale * (s[k] - along * u[k]);
}

inline double step_scale(StepScaler scaler, double length, double eps_norm) {
  return scaler == StepScaler::FilterNorm ? length : 1.0 / std::max(length, eps_norm);
}

}  // namespace detail

/// Regularization step for every filter: row i is
///   scale_i * [ S_i - (S_i . w_i) w_i ],  S_i = sum_j f(w_j - w_i)
/// over normalized rows w. Degenerate rows get zero and exert no force.
/// The L2 sum collapses to (sum_j w_j) - n*w_i, one pass instead of a
/// pairwise loop; L1 keeps the pairwise loop because each term is rescaled.
inline ForceGradient force_gradient(const FilterMatrix& mat, const ForceConfig& cfg) {
  cfg.validate();
  if (mat.rows == 0) throw std::invalid_argument("force_gradient: empty matrix");
  const NormalizedFilters nf = normalize_rows(mat, cfg.eps_norm);
  const std::size_t n = mat.rows, d = mat.cols;

  ForceGradient out;
  out.delta = Mat(n, d);
  out.perp_residuals.assign(n, 0.0);

  Vec s(d);
  if (cfg.kind == ForceKind::L2Force) {
    Vec wsum(d, 0.0);
    std::size_t cnt = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (nf.degenerate_mask[j]) continue;
      const auto uj = nf.unit_rows.row(j);
      for (std::size_t k = 0; k < d; ++k) wsum[k] += uj[k];
      ++cnt;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (nf.degenerate_mask[i]) continue;
      const auto ui = nf.unit_rows.row(i);
      for (std::size_t k = 0; k < d; ++k) s[k] = wsum[k] - double(cnt) * ui[k];
      detail::project_and_scale(s, ui,
                                detail::step_scale(cfg.scaler, nf.lengths[i], cfg.eps_norm),
                                out.delta.row(i));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (nf.degenerate_mask[i]) continue;
      const auto ui = nf.unit_rows.row(i);
      std::fill(s.begin(), s.end(), 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || nf.degenerate_mask[j]) continue;
        const Vec f = pairwise_force(ui, nf.unit_rows.row(j), cfg.kind, cfg.eps_dist);
        for (std::size_t k = 0; k < d; ++k) s[k] += f[k];
      }
      detail::project_and_scale(s, ui,
                                detail::step_scale(cfg.scaler, nf.lengths[i], cfg.eps_norm),
                                out.delta.row(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!nf.degenerate_mask[i])
      out.perp_residuals[i] = std::abs(dot(out.delta.row(i), nf.unit_rows.row(i)));
  return out;
}

namespace detail {

inline NormalizedFilters normalize_strict(const FilterMatrix& mat) {
  NormalizedFilters nf = normalize_rows(mat);
  for (std::size_t i = 0; i < mat.rows; ++i)
    if (nf.degenerate_mask[i])
      throw std::invalid_argument("undefined normalized distance: degenerate filter row " +
                                  std::to_string(i));
  return nf;
}

}  // namespace detail

/// Pairwise-distance regularizer over normalized rows:
///   L2: (1/2) sum_{i,j} ||w_j - w_i||^2     L1: sum_{i,j} ||w_j - w_i||
/// Both sums run over ordered pairs; only the L2 variant carries the 1/2.
inline double reference_regularizer(const FilterMatrix& mat, ForceKind kind) {
  const NormalizedFilters nf = detail::normalize_strict(mat);
  double r = 0.0;
  Vec diff(mat.cols);
  for (std::size_t i = 0; i < mat.rows; ++i) {
    const auto ui = nf.unit_rows.row(i);
    for (std::size_t j = 0; j < mat.rows; ++j) {
      if (j == i) continue;
      const auto uj = nf.unit_rows.row(j);
      double sq = 0.0;
      for (std::size_t k = 0; k < mat.cols; ++k) {
        const double v = uj[k] - ui[k];
        sq += v * v;
      }
      r += kind == ForceKind::L2Force ? 0.5 * sq : std::sqrt(sq);
    }
  }
  return r;
}

/// Analytic gradient of reference_regularizer with respect to the raw
/// (unnormalized) rows; verified against central finite differences.
/// Row k works out to -(2/||W_k||) * [ T_k - (T_k . w_k) w_k ] where T_k is
/// the summed pairwise force on w_k, the factor 2 coming from each unordered
/// pair appearing twice in the double sum.
inline Mat reference_regularizer_gradient(const FilterMatrix& mat, ForceKind kind) {
  const NormalizedFilters nf = detail::normalize_strict(mat);
  const std::size_t n = mat.rows, d = mat.cols;
  Mat g(n, d);
  Vec t(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ui = nf.unit_rows.row(i);
    std::fill(t.begin(), t.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec f = pairwise_force(ui, nf.unit_rows.row(j), kind);
      for (std::size_t k = 0; k < d; ++k) t[k] += f[k];
    }
    detail::project_and_scale(t, ui, -2.0 / nf.lengths[i], g.row(i));
  }
  return g;
}

/// One SGD step: weights - eta * (data_loss_grad - lambda_s * delta).
inline FilterMatrix apply_update(const FilterMatrix& weights, const Mat& data_loss_grad,
                                 const ForceGradient& force, double eta, double lambda_s) {
  if (data_loss_grad.rows != weights.rows || data_loss_grad.cols != weights.cols ||
      force.delta.rows != weights.rows || force.delta.cols != weights.cols)
    throw std::invalid_argument("apply_update: shape mismatch");
  if (!(eta > 0.0)) throw std::invalid_argument("apply_update: eta must be positive");
  FilterMatrix out = weights;
  for (std::size_t i = 0; i < weights.rows * weights.cols; ++i)
    out.data[i] = weights.data[i] -
                  eta * (data_loss_grad.a[i] - lambda_s * force.delta.a[i]);
  return out;
}

}  // namespace forcelr

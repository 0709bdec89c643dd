#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/matrix.hpp"

namespace forcelr {

constexpr double kDefaultEpsNorm = 1e-12;

/// All weights of one convolutional layer: n_filters filters of shape
/// channels x height x width, flattened row-major in (n, c, h, w) order.
/// For grouped convolution, `channels` is the per-group input channel count
/// and filters [k*N/g, (k+1)*N/g) belong to group k.
struct FilterBank {
  std::vector<double> data;
  std::size_t n_filters = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t groups = 1;

  std::size_t filter_size() const { return channels * height * width; }

  void validate() const {
    if (n_filters == 0 || channels == 0 || height == 0 || width == 0)
      throw std::invalid_argument("FilterBank: all dimensions must be positive");
    if (groups == 0 || n_filters % groups != 0)
      throw std::invalid_argument("FilterBank: n_filters must be divisible by groups");
    const std::uint64_t n64 = n_filters, c64 = channels, h64 = height, w64 = width;
    const std::uint64_t limit = std::numeric_limits<std::size_t>::max() / sizeof(double);
    if (c64 != 0 && h64 != 0 && w64 != 0 &&
        (n64 > limit / c64 / h64 / w64))
      throw std::overflow_error("FilterBank: N*C*H*W exceeds addressable size");
    if (data.size() != n_filters * filter_size())
      throw std::invalid_argument("FilterBank: data length != N*C*H*W");
    for (double v : data)
      if (!std::isfinite(v))
        throw std::invalid_argument("FilterBank: non-finite entry");
  }
};

/// Shape provenance carried along with a reshaped filter matrix so the
/// factorization stage can rebuild banks without guessing.
struct FilterShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t groups = 1;

  bool operator==(const FilterShape&) const = default;
};

/// The N x CHW matrix view of a filter bank: row n is filter n flattened in
/// channel-major (c, h, w) order.
struct FilterMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  FilterShape source;

  Mat as_mat() const { return Mat(rows, cols, data); }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
};

inline FilterMatrix reshape_to_matrix(const FilterBank& bank) {
  bank.validate();
  FilterMatrix m;
  m.rows = bank.n_filters;
  m.cols = bank.filter_size();
  m.data = bank.data;  // (n, c, h, w) row-major already flattens to rows of length CHW
  m.source = {bank.channels, bank.height, bank.width, bank.groups};
  return m;
}

inline FilterBank reshape_to_bank(const FilterMatrix& mat) {
  if (mat.cols != mat.source.channels * mat.source.height * mat.source.width)
    throw std::invalid_argument("reshape_to_bank: cols != C*H*W of source shape");
  FilterBank bank;
  bank.data = mat.data;
  bank.n_filters = mat.rows;
  bank.channels = mat.source.channels;
  bank.height = mat.source.height;
  bank.width = mat.source.width;
  bank.groups = mat.source.groups;
  bank.validate();
  return bank;
}

/// Row-wise slice [row_begin, row_end) keeping the source shape. Used for
/// per-group analysis of grouped layers.
inline FilterMatrix slice_rows(const FilterMatrix& mat, std::size_t row_begin,
                               std::size_t row_end) {
  if (row_begin > row_end || row_end > mat.rows)
    throw std::out_of_range("slice_rows: bad range");
  FilterMatrix out;
  out.rows = row_end - row_begin;
  out.cols = mat.cols;
  out.data.assign(mat.data.begin() + row_begin * mat.cols,
                  mat.data.begin() + row_end * mat.cols);
  out.source = mat.source;
  out.source.groups = 1;
  return out;
}

/// Rows scaled to unit Euclidean norm. Rows with norm < eps_norm are flagged
/// degenerate and left as zero rows rather than divided by a tiny norm.
struct NormalizedFilters {
  Mat unit_rows;
  Vec lengths;
  std::vector<bool> degenerate_mask;

  std::size_t count_nondegenerate() const {
    std::size_t n = 0;
    for (bool d : degenerate_mask) n += !d;
    return n;
  }
};

inline NormalizedFilters normalize_rows(const FilterMatrix& mat,
                                        double eps_norm = kDefaultEpsNorm) {
  NormalizedFilters out;
  out.unit_rows = Mat(mat.rows, mat.cols);
  out.lengths.resize(mat.rows);
  out.degenerate_mask.resize(mat.rows);
  for (std::size_t i = 0; i < mat.rows; ++i) {
    const auto r = mat.row(i);
    const double len = norm2(r);
    out.lengths[i] = len;
    if (len < eps_norm) {
      out.degenerate_mask[i] = true;  // row stays zero
      continue;
    }
    out.degenerate_mask[i] = false;
    const double inv = 1.0 / len;
    for (std::size_t j = 0; j < mat.cols; ++j) out.unit_rows(i, j) = r[j] * inv;
  }
  return out;
}

}  // namespace forcelr

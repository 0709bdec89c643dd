#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "forcelr/matrix.hpp"
#include "forcelr/rng.hpp"

namespace forcelr {

struct KMeansResult {
  Mat centroids;                        // k x d
  std::vector<std::size_t> assignment;  // length n, values in [0, k)
  double sse = 0.0;                     // sum of squared row-to-centroid distances
  int iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

inline std::size_t nearest_centroid(const Mat& centroids, std::span<const double> x,
                                    double& best) {
  std::size_t arg = 0;
  best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d2 = sq_dist(x, centroids.row(c));
    if (d2 < best) {
      best = d2;
      arg = c;
    }
  }
  return arg;
}

}  // namespace detail

/// Lloyd iterations from caller-supplied starting centroids. Deterministic:
/// assignment ties go to the lowest centroid index, and an emptied cluster is
/// re-seeded at the row farthest from its own centroid (lowest row index on
/// ties; left in place when every row sits exactly on a centroid).
inline KMeansResult kmeans_refine(const Mat& rows, Mat start_centroids,
                                  int max_iters = 100) {
  const std::size_t n = rows.rows, d = rows.cols, k = start_centroids.rows;
  if (k == 0 || k > n || start_centroids.cols != d)
    throw std::invalid_argument("kmeans_refine: bad centroid shape");
  if (max_iters < 1) throw std::invalid_argument("kmeans_refine: max_iters must be >= 1");

  Mat centroids = std::move(start_centroids);
  std::vector<std::size_t> assignment(n, 0), prev(n, k);
  Vec best_d2(n, 0.0);
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i)
      assignment[i] = detail::nearest_centroid(centroids, rows.row(i), best_d2[i]);

    bool reseeded = false;
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) ++counts[assignment[i]];
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d2 = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i] && counts[assignment[i]] > 1 && best_d2[i] > far_d2) {
          far_d2 = best_d2[i];
          far = i;
        }
      if (far == n) continue;
      taken[far] = true;
      --counts[assignment[far]];
      assignment[far] = c;
      ++counts[c];
      std::copy_n(rows.row(far).data(), d, centroids.row(c).data());
      best_d2[far] = 0.0;
      reseeded = true;
    }

    if (!reseeded && assignment == prev) break;
    prev = assignment;

    Mat next(k, d);
    for (std::size_t i = 0; i < n; ++i) {
      auto cr = next.row(assignment[i]);
      const auto ri = rows.row(i);
      for (std::size_t j = 0; j < d; ++j) cr[j] += ri[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      auto cr = next.row(c);
      const double inv = 1.0 / double(counts[c]);
      for (std::size_t j = 0; j < d; ++j) cr[j] *= inv;
    }
    centroids = std::move(next);
  }

  // Re-assign against the final centroids so the reported pair is consistent
  // even when the loop hit max_iters mid-update.
  KMeansResult out;
  for (std::size_t i = 0; i < n; ++i) {
    double best = 0.0;
    assignment[i] = detail::nearest_centroid(centroids, rows.row(i), best);
    out.sse += best;
  }
  out.centroids = std::move(centroids);
  out.assignment = std::move(assignment);
  out.iterations = iter;
  return out;
}

/// k-means++ seeding then Lloyd refinement, fully deterministic under seed.
inline KMeansResult kmeans_cluster(const Mat& rows, std::size_t k, std::uint64_t seed,
                                   int max_iters = 100) {
  const std::size_t n = rows.rows, d = rows.cols;
  if (k == 0 || k > n) throw std::invalid_argument("kmeans_cluster: k must be in [1, n]");

  SplitMix64 rng(seed);
  Mat centroids(k, d);
  std::vector<bool> chosen(n, false);

  // First centroid uniform, the rest proportional to squared distance from
  // the nearest centroid picked so far.
  const std::size_t first = rng.index(n);
  chosen[first] = true;
  std::copy_n(rows.row(first).data(), d, centroids.row(0).data());
  Vec dist2(n);
  for (std::size_t i = 0; i < n; ++i)
    dist2[i] = detail::sq_dist(rows.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : dist2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += dist2[i];
        if (cum > r) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = n - 1;  // r landed on the final cumulative edge
    } else {
      pick = 0;  // all rows coincide with centroids; lowest unused index, else 0
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    chosen[pick] = true;
    std::copy_n(rows.row(pick).data(), d, centroids.row(c).data());
    for (std::size_t i = 0; i < n; ++i)
      dist2[i] = std::min(dist2[i], detail::sq_dist(rows.row(i), centroids.row(c)));
  }

  return kmeans_refine(rows, std::move(centroids), max_iters);
}

}  // namespace forcelr

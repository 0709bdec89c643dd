#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "forcelr/tensor.hpp"

namespace forcelr {

/// Layers store parameters in the scalar type S but always accumulate in
/// double, so float nets keep reproducible sums and the double instantiation
/// is accurate enough for finite-difference gradient checks. Each layer
/// caches what its backward needs; backward without a matching forward
/// throws.

template <class S>
struct Conv2D {
  std::size_t in_c = 0, n_filters = 0, kernel = 0, stride = 1, pad = 0;
  std::vector<S> weight;  // n_filters x in_c x kernel x kernel
  std::vector<S> bias;    // n_filters

  Tensor4<S> cached_in;
  bool has_cache = false;

  std::size_t weight_count() const { return n_filters * in_c * kernel * kernel; }

  std::size_t out_dim(std::size_t in) const {
    if (in + 2 * pad < kernel)
      throw std::invalid_argument("Conv2D: input smaller than kernel");
    return (in + 2 * pad - kernel) / stride + 1;
  }

  // cross-correlation, no kernel flip
  Tensor4<S> forward(const Tensor4<S>& in, bool cache) {
    if (in.c != in_c) throw std::invalid_argument("Conv2D: channel mismatch");
    const std::size_t oh = out_dim(in.h), ow = out_dim(in.w);
    Tensor4<S> out(in.b, n_filters, oh, ow);
    for (std::size_t i = 0; i < in.b; ++i)
      for (std::size_t n = 0; n < n_filters; ++n)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            double acc = double(bias[n]);
            for (std::size_t c = 0; c < in_c; ++c)
              for (std::size_t ky = 0; ky < kernel; ++ky) {
                const std::size_t iy = y * stride + ky;
                if (iy < pad || iy - pad >= in.h) continue;
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                  const std::size_t ix = x * stride + kx;
                  if (ix < pad || ix - pad >= in.w) continue;
                  acc += double(weight[((n * in_c + c) * kernel + ky) * kernel + kx]) *
                         double(in.at(i, c, iy - pad, ix - pad));
                }
              }
            out.at(i, n, y, x) = S(acc);
          }
    if (cache) {
      cached_in = in;
      has_cache = true;
    }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& gout, std::vector<double>& gw,
                      std::vector<double>& gb) {
    if (!has_cache) throw std::logic_error("Conv2D: backward without cached forward");
    const Tensor4<S>& in = cached_in;
    gw.assign(weight_count(), 0.0);
    gb.assign(n_filters, 0.0);
    Tensor4<S> gin(in.b, in.c, in.h, in.w);
    std::vector<double> gin_acc(in.size(), 0.0);
    for (std::size_t i = 0; i < in.b; ++i)
      for (std::size_t n = 0; n < n_filters; ++n)
        for (std::size_t y = 0; y < gout.h; ++y)
          for (std::size_t x = 0; x < gout.w; ++x) {
            const double g = double(gout.at(i, n, y, x));
            if (g == 0.0) continue;
            gb[n] += g;
            for (std::size_t c = 0; c < in_c; ++c)
              for (std::size_t ky = 0; ky < kernel; ++ky) {
                const std::size_t iy = y * stride + ky;
                if (iy < pad || iy - pad >= in.h) continue;
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                  const std::size_t ix = x * stride + kx;
                  if (ix < pad || ix - pad >= in.w) continue;
                  const std::size_t wi = ((n * in_c + c) * kernel + ky) * kernel + kx;
                  gw[wi] += g * double(in.at(i, c, iy - pad, ix - pad));
                  gin_acc[((i * in.c + c) * in.h + (iy - pad)) * in.w + (ix - pad)] +=
                      g * double(weight[wi]);
                }
              }
          }
    for (std::size_t i = 0; i < gin.size(); ++i) gin.v[i] = S(gin_acc[i]);
    return gin;
  }
};

template <class S>
struct ReLU {
  Tensor4<S> cached_in;
  bool has_cache = false;

  Tensor4<S> forward(const Tensor4<S>& in, bool cache) {
    Tensor4<S> out = in;
    for (S& x : out.v) x = std::max(x, S(0));
    if (cache) {
      cached_in = in;
      has_cache = true;
    }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& gout) {
    if (!has_cache) throw std::logic_error("ReLU: backward without cached forward");
    Tensor4<S> gin = gout;
    for (std::size_t i = 0; i < gin.size(); ++i)
      if (cached_in.v[i] <= S(0)) gin.v[i] = S(0);
    return gin;
  }
};

template <class S>
struct MaxPool {
  std::size_t k = 2, stride = 2;

  std::vector<std::size_t> argmax;  // flat input index per output cell
  std::size_t in_b = 0, in_c = 0, in_h = 0, in_w = 0;
  bool has_cache = false;

  Tensor4<S> forward(const Tensor4<S>& in, bool cache) {
    if (in.h < k || in.w < k) throw std::invalid_argument("MaxPool: input too small");
    const std::size_t oh = (in.h - k) / stride + 1, ow = (in.w - k) / stride + 1;
    Tensor4<S> out(in.b, in.c, oh, ow);
    std::vector<std::size_t> arg(out.size());
    for (std::size_t i = 0; i < in.b; ++i)
      for (std::size_t c = 0; c < in.c; ++c)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            S best = std::numeric_limits<S>::lowest();
            std::size_t best_idx = 0;
            // strict > keeps the first maximum in scan order: deterministic
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::size_t iy = y * stride + ky, ix = x * stride + kx;
                const S v = in.at(i, c, iy, ix);
                if (v > best) {
                  best = v;
                  best_idx = ((i * in.c + c) * in.h + iy) * in.w + ix;
                }
              }
            out.at(i, c, y, x) = best;
            arg[((i * in.c + c) * oh + y) * ow + x] = best_idx;
          }
    if (cache) {
      argmax = std::move(arg);
      in_b = in.b;
      in_c = in.c;
      in_h = in.h;
      in_w = in.w;
      has_cache = true;
    }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& gout) {
    if (!has_cache) throw std::logic_error("MaxPool: backward without cached forward");
    Tensor4<S> gin(in_b, in_c, in_h, in_w);
    for (std::size_t o = 0; o < gout.size(); ++o) gin.v[argmax[o]] += gout.v[o];
    return gin;
  }
};

template <class S>
struct Dense {
  std::size_t in_dim = 0, out_dim = 0;
  std::vector<S> weight;  // out_dim x in_dim
  std::vector<S> bias;    // out_dim

  Tensor4<S> cached_in;
  bool has_cache = false;

  // flattens whatever feature shape arrives; output is B x out_dim x 1 x 1
  Tensor4<S> forward(const Tensor4<S>& in, bool cache) {
    if (in.features() != in_dim) throw std::invalid_argument("Dense: width mismatch");
    Tensor4<S> out(in.b, out_dim, 1, 1);
    for (std::size_t i = 0; i < in.b; ++i)
      for (std::size_t o = 0; o < out_dim; ++o) {
        double acc = double(bias[o]);
        for (std::size_t j = 0; j < in_dim; ++j)
          acc += double(weight[o * in_dim + j]) * double(in.v[i * in_dim + j]);
        out.at(i, o, 0, 0) = S(acc);
      }
    if (cache) {
      cached_in = in;
      has_cache = true;
    }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& gout, std::vector<double>& gw,
                      std::vector<double>& gb) {
    if (!has_cache) throw std::logic_error("Dense: backward without cached forward");
    const Tensor4<S>& in = cached_in;
    gw.assign(weight.size(), 0.0);
    gb.assign(bias.size(), 0.0);
    Tensor4<S> gin(in.b, in.c, in.h, in.w);
    std::vector<double> gin_acc(in.size(), 0.0);
    for (std::size_t i = 0; i < in.b; ++i)
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double g = double(gout.at(i, o, 0, 0));
        gb[o] += g;
        for (std::size_t j = 0; j < in_dim; ++j) {
          gw[o * in_dim + j] += g * double(in.v[i * in_dim + j]);
          gin_acc[i * in_dim + j] += g * double(weight[o * in_dim + j]);
        }
      }
    for (std::size_t i = 0; i < gin.size(); ++i) gin.v[i] = S(gin_acc[i]);
    return gin;
  }
};

/// Mean softmax-cross-entropy over the batch, computed in double.
/// grad rows sum to zero by construction (probs minus one-hot, / B).
template <class S>
struct SoftmaxXent {
  double forward(const Tensor4<S>& logits, const std::vector<int>& labels,
                 Tensor4<S>* grad = nullptr) const {
    if (logits.b != labels.size())
      throw std::invalid_argument("SoftmaxXent: batch/label mismatch");
    const std::size_t k = logits.features();
    if (grad) *grad = Tensor4<S>(logits.b, logits.c, logits.h, logits.w);
    double loss = 0.0;
    std::vector<double> p(k);
    for (std::size_t i = 0; i < logits.b; ++i) {
      const int label = labels[i];
      if (label < 0 || std::size_t(label) >= k)
        throw std::invalid_argument("SoftmaxXent: label out of range");
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, double(logits.v[i * k + j]));
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        p[j] = std::exp(double(logits.v[i * k + j]) - mx);
        z += p[j];
      }
      loss += std::log(z) - (double(logits.v[i * k + label]) - mx);
      if (grad)
        for (std::size_t j = 0; j < k; ++j)
          grad->v[i * k + j] =
              S((p[j] / z - (std::size_t(label) == j ? 1.0 : 0.0)) / double(logits.b));
    }
    return loss / double(logits.b);
  }
};

}  // namespace forcelr

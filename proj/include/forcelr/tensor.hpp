#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace forcelr {

/// Batched feature map, shape B x C x H x W, row-major. Templated on the
/// storage scalar: float in the trainer, double in gradient-check builds.
template <class S>
struct Tensor4 {
  std::size_t b = 0, c = 0, h = 0, w = 0;
  std::vector<S> v;

  Tensor4() = default;
  Tensor4(std::size_t b_, std::size_t c_, std::size_t h_, std::size_t w_)
      : b(b_), c(c_), h(h_), w(w_), v(b_ * c_ * h_ * w_, S(0)) {}

  S& at(std::size_t i, std::size_t ci, std::size_t y, std::size_t x) {
    return v[((i * c + ci) * h + y) * w + x];
  }
  S at(std::size_t i, std::size_t ci, std::size_t y, std::size_t x) const {
    return v[((i * c + ci) * h + y) * w + x];
  }

  std::size_t size() const { return v.size(); }
  std::size_t features() const { return c * h * w; }

  bool same_shape(const Tensor4& o) const {
    return b == o.b && c == o.c && h == o.h && w == o.w;
  }
};

}  // namespace forcelr

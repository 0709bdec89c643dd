#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "forcelr/filter_bank.hpp"
#include "forcelr/layers.hpp"
#include "forcelr/rng.hpp"
#include "forcelr/tensor.hpp"
#include "json.hpp"

namespace forcelr {

/// A straight-line stack of layers with a softmax-cross-entropy head.
template <class S>
struct MicroNet {
  using Layer = std::variant<Conv2D<S>, ReLU<S>, MaxPool<S>, Dense<S>>;

  std::vector<Layer> layers;
  std::size_t in_c = 0, in_h = 0, in_w = 0, classes = 0;
  SoftmaxXent<S> head;

  Tensor4<S> forward(const Tensor4<S>& x, bool cache = false) {
    Tensor4<S> cur = x;
    for (auto& layer : layers)
      cur = std::visit([&](auto& l) -> Tensor4<S> { return l.forward(cur, cache); },
                       layer);
    return cur;
  }

  double loss(const Tensor4<S>& x, const std::vector<int>& labels) {
    const Tensor4<S> logits = forward(x, false);
    return head.forward(logits, labels);
  }

  struct Grads {
    std::vector<std::vector<double>> weight;  // empty for parameterless layers
    std::vector<std::vector<double>> bias;
  };

  /// Forward with caches, head loss, full backward. Gradients are indexed by
  /// layer position; parameterless layers get empty slots.
  double forward_backward(const Tensor4<S>& x, const std::vector<int>& labels,
                          Grads& grads) {
    const Tensor4<S> logits = forward(x, true);
    Tensor4<S> g;
    const double loss_value = head.forward(logits, labels, &g);
    grads.weight.assign(layers.size(), {});
    grads.bias.assign(layers.size(), {});
    for (std::size_t li = layers.size(); li-- > 0;) {
      g = std::visit(
          [&](auto& l) -> Tensor4<S> {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2D<S>> || std::is_same_v<L, Dense<S>>)
              return l.backward(g, grads.weight[li], grads.bias[li]);
            else
              return l.backward(g);
          },
          layer_at(li));
    }
    return loss_value;
  }

  Layer& layer_at(std::size_t i) { return layers[i]; }

  std::vector<std::size_t> conv_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (std::holds_alternative<Conv2D<S>>(layers[i])) out.push_back(i);
    return out;
  }

  FilterBank conv_bank(std::size_t layer_index) const {
    const auto& conv = std::get<Conv2D<S>>(layers[layer_index]);
    FilterBank b;
    b.n_filters = conv.n_filters;
    b.channels = conv.in_c;
    b.height = conv.kernel;
    b.width = conv.kernel;
    b.data.assign(conv.weight.begin(), conv.weight.end());
    return b;
  }

  void set_conv_weights(std::size_t layer_index, const std::vector<double>& w) {
    auto& conv = std::get<Conv2D<S>>(layers[layer_index]);
    if (w.size() != conv.weight.size())
      throw std::invalid_argument("set_conv_weights: size mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) conv.weight[i] = S(w[i]);
  }

  bool finite() const {
    for (const auto& layer : layers) {
      const bool ok = std::visit(
          [](const auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2D<S>> || std::is_same_v<L, Dense<S>>) {
              for (S v : l.weight)
                if (!std::isfinite(double(v))) return false;
              for (S v : l.bias)
                if (!std::isfinite(double(v))) return false;
            }
            return true;
          },
          layer);
      if (!ok) return false;
    }
    return true;
  }
};

/// Architecture descriptors are an ordered JSON list; shape compatibility is
/// checked while building, so a bad stack fails at construction, not mid-run.
inline nlohmann::json tiny_convnet_arch(std::size_t classes) {
  return nlohmann::json::array(
      {{{"type", "conv"}, {"filters", 8}, {"kernel", 3}, {"stride", 1}, {"pad", 1}},
       {{"type", "relu"}},
       {{"type", "pool"}, {"k", 2}, {"stride", 2}},
       {{"type", "conv"}, {"filters", 16}, {"kernel", 3}, {"stride", 1}, {"pad", 1}},
       {{"type", "relu"}},
       {{"type", "pool"}, {"k", 2}, {"stride", 2}},
       {{"type", "dense"}, {"units", classes}}});
}

template <class S>
MicroNet<S> build_net(const nlohmann::json& arch, std::size_t in_c, std::size_t in_h,
                      std::size_t in_w, std::size_t classes) {
  if (!arch.is_array() || arch.empty())
    throw std::invalid_argument("build_net: arch must be a non-empty array");
  MicroNet<S> net;
  net.in_c = in_c;
  net.in_h = in_h;
  net.in_w = in_w;
  net.classes = classes;

  std::size_t c = in_c, h = in_h, w = in_w;
  for (const auto& spec : arch) {
    const std::string type = spec.at("type").get<std::string>();
    if (type == "conv") {
      Conv2D<S> l;
      l.in_c = c;
      l.n_filters = spec.at("filters").get<std::size_t>();
      l.kernel = spec.at("kernel").get<std::size_t>();
      l.stride = spec.value("stride", std::size_t{1});
      l.pad = spec.value("pad", std::size_t{0});
      if (l.n_filters == 0 || l.kernel == 0)
        throw std::invalid_argument("build_net: conv needs positive filters/kernel");
      l.weight.assign(l.weight_count(), S(0));
      l.bias.assign(l.n_filters, S(0));
      h = l.out_dim(h);
      w = l.out_dim(w);
      c = l.n_filters;
      net.layers.emplace_back(std::move(l));
    } else if (type == "relu") {
      net.layers.emplace_back(ReLU<S>{});
    } else if (type == "pool") {
      MaxPool<S> l;
      l.k = spec.value("k", std::size_t{2});
      l.stride = spec.value("stride", l.k);
      if (h < l.k || w < l.k)
        throw std::invalid_argument("build_net: pool window exceeds input");
      h = (h - l.k) / l.stride + 1;
      w = (w - l.k) / l.stride + 1;
      net.layers.emplace_back(std::move(l));
    } else if (type == "dense") {
      Dense<S> l;
      l.in_dim = c * h * w;
      l.out_dim = spec.at("units").get<std::size_t>();
      if (l.out_dim == 0) throw std::invalid_argument("build_net: dense needs units");
      l.weight.assign(l.in_dim * l.out_dim, S(0));
      l.bias.assign(l.out_dim, S(0));
      c = l.out_dim;
      h = 1;
      w = 1;
      net.layers.emplace_back(std::move(l));
    } else {
      throw std::invalid_argument("build_net: unknown layer type '" + type + "'");
    }
  }
  if (c * h * w != classes)
    throw std::invalid_argument("build_net: final width != number of classes");
  return net;
}

/// Fan-in-scaled uniform init, U(+-sqrt(3/fan_in)), biases zero. Gives every
/// filter an expected unit norm at init, which keeps the two step-size
/// scaler variants comparable from the same starting point.
template <class S>
void init_net(MicroNet<S>& net, std::uint64_t seed) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    std::visit(
        [&](auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<S>>) {
            SplitMix64 g(derive_seed(seed, "init", i));
            const double bound = std::sqrt(3.0 / double(l.in_c * l.kernel * l.kernel));
            for (S& v : l.weight) v = S(g.uniform(-bound, bound));
            for (S& v : l.bias) v = S(0);
          } else if constexpr (std::is_same_v<L, Dense<S>>) {
            SplitMix64 g(derive_seed(seed, "init", i));
            const double bound = std::sqrt(3.0 / double(l.in_dim));
            for (S& v : l.weight) v = S(g.uniform(-bound, bound));
            for (S& v : l.bias) v = S(0);
          }
        },
        net.layers[i]);
  }
}

/// Rebuilds the descriptor of a constructed net (used when archiving a net
/// whose conv layers were replaced by split pairs).
template <class S>
nlohmann::json describe_arch(const MicroNet<S>& net) {
  nlohmann::json arch = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<S>>) {
            arch.push_back({{"type", "conv"},
                            {"filters", l.n_filters},
                            {"kernel", l.kernel},
                            {"stride", l.stride},
                            {"pad", l.pad}});
          } else if constexpr (std::is_same_v<L, ReLU<S>>) {
            arch.push_back({{"type", "relu"}});
          } else if constexpr (std::is_same_v<L, MaxPool<S>>) {
            arch.push_back({{"type", "pool"}, {"k", l.k}, {"stride", l.stride}});
          } else {
            arch.push_back({{"type", "dense"}, {"units", l.out_dim}});
          }
        },
        layer);
  }
  return arch;
}

/// Exact parameter copy between scalar types (float -> double is lossless).
template <class To, class From>
MicroNet<To> convert_net(const MicroNet<From>& src) {
  MicroNet<To> dst = build_net<To>(describe_arch(src), src.in_c, src.in_h, src.in_w,
                                   src.classes);
  for (std::size_t i = 0; i < src.layers.size(); ++i) {
    std::visit(
        [&](const auto& from) {
          using L = std::decay_t<decltype(from)>;
          if constexpr (std::is_same_v<L, Conv2D<From>>) {
            auto& to = std::get<Conv2D<To>>(dst.layers[i]);
            for (std::size_t k = 0; k < from.weight.size(); ++k)
              to.weight[k] = To(from.weight[k]);
            for (std::size_t k = 0; k < from.bias.size(); ++k)
              to.bias[k] = To(from.bias[k]);
          } else if constexpr (std::is_same_v<L, Dense<From>>) {
            auto& to = std::get<Dense<To>>(dst.layers[i]);
            for (std::size_t k = 0; k < from.weight.size(); ++k)
              to.weight[k] = To(from.weight[k]);
            for (std::size_t k = 0; k < from.bias.size(); ++k)
              to.bias[k] = To(from.bias[k]);
          }
        },
        src.layers[i]);
  }
  return dst;
}

}  // namespace forcelr

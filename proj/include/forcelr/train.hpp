#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "forcelr/dataset.hpp"
#include "forcelr/force.hpp"
#include "forcelr/lowrank.hpp"
#include "forcelr/net.hpp"
#include "forcelr/rng.hpp"
#include "json.hpp"

namespace forcelr {

struct StepDecay {
  double gamma = 1.0;
  std::size_t every = 0;  // 0 keeps the rate constant

  double rate_at(double eta, std::size_t step) const {
    if (every == 0 || gamma == 1.0) return eta;
    return eta * std::pow(gamma, double((step - 1) / every));
  }
};

struct TrainConfig {
  double eta = 0.05;
  StepDecay schedule;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_steps = 300;
  std::size_t eval_every = 50;
  std::uint64_t seed = 1;
  std::optional<ForceConfig> force;  // applied to every conv layer
  bool force_only = false;           // descend on the coordination term alone

  void validate() const {
    if (!(eta > 0)) throw std::invalid_argument("TrainConfig: eta must be positive");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
    if (max_steps == 0) throw std::invalid_argument("TrainConfig: max_steps >= 1");
    if (eval_every == 0) throw std::invalid_argument("TrainConfig: eval_every >= 1");
    if (weight_decay < 0) throw std::invalid_argument("TrainConfig: negative decay");
    if (force) force->validate();
    if (force_only && (!force || force->lambda_s == 0.0))
      throw std::invalid_argument("TrainConfig: force_only needs lambda_s != 0");
  }
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MetricsRecord {
  std::size_t step = 0;
  double lr = 0;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_loss = 0;
  double val_acc = 0;
  std::vector<std::size_t> conv_ranks;  // per conv layer at tau = 0.05
  double reference_reg = std::numeric_limits<double>::quiet_NaN();
};

inline nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json j{{"step", r.step},       {"lr", r.lr},
                   {"val_loss", r.val_loss}, {"val_acc", r.val_acc},
                   {"conv_ranks", r.conv_ranks}};
  j["train_loss"] = std::isfinite(r.train_loss) ? nlohmann::json(r.train_loss)
                                                : nlohmann::json(nullptr);
  j["reference_regularizer"] = std::isfinite(r.reference_reg)
                                   ? nlohmann::json(r.reference_reg)
                                   : nlohmann::json(nullptr);
  return j;
}

struct TrainResult {
  std::vector<MetricsRecord> log;
  std::size_t steps_run = 0;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
};

template <class S>
EvalResult evaluate(MicroNet<S>& net, const Dataset& ds, std::size_t batch_size = 64) {
  if (ds.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t at = 0; at < ds.size(); at += batch_size) {
    const std::size_t n = std::min(batch_size, ds.size() - at);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = at + i;
    const Tensor4<S> batch = ds.template gather<S>(idx);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = ds.labels[at + i];
    const Tensor4<S> logits = net.forward(batch, false);
    loss_sum += net.head.forward(logits, labels) * double(n);
    for (std::size_t b = 0; b < n; ++b) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < net.classes; ++k)
        if (logits.at(b, k, 0, 0) > logits.at(b, best, 0, 0)) best = k;
      if (int(best) == labels[b]) ++correct;
    }
  }
  return {loss_sum / double(ds.size()), double(correct) / double(ds.size())};
}

namespace detail {

/// Coordination value over all conv layers (NaN once any filter collapses to
/// zero, since the normalized distance is undefined there).
template <class S>
double logged_reference(MicroNet<S>& net, const std::vector<std::size_t>& convs,
                        ForceKind kind) {
  double total = 0;
  for (std::size_t li : convs) {
    const FilterBank bank = net.conv_bank(li);
    const FilterMatrix fm = reshape_to_matrix(bank);
    const NormalizedFilters nf = normalize_rows(fm);
    if (nf.count_nondegenerate() != fm.rows)
      return std::numeric_limits<double>::quiet_NaN();
    if (fm.rows >= 2) total += reference_regularizer(fm, kind);
  }
  return total;
}

template <class S>
MetricsRecord log_record(MicroNet<S>& net, const Dataset& tr, const Dataset& va,
                         const std::vector<std::size_t>& convs, ForceKind kind,
                         std::size_t step, double lr) {
  MetricsRecord r;
  r.step = step;
  r.lr = lr;
  r.train_loss = evaluate(net, tr).loss;
  const EvalResult ve = evaluate(net, va);
  r.val_loss = ve.loss;
  r.val_acc = ve.accuracy;
  for (std::size_t li : convs)
    r.conv_ranks.push_back(pca_rank(reshape_to_matrix(net.conv_bank(li)), 0.05));
  r.reference_reg = logged_reference(net, convs, kind);
  return r;
}

}  // namespace detail

/// Seeded minibatch SGD. The per-step update on a conv layer is
///   W <- W - lr * (dE/dW + weight_decay * W - lambda_s * Delta(W)),
/// with Delta computed from the same pre-update weights as dE/dW. A zero
/// lambda_s takes the exact code path of a run with no force configured, so
/// the two trajectories match bit for bit.
template <class S>
TrainResult train(MicroNet<S>& net, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& cfg) {
  cfg.validate();
  train_data.validate();
  val_data.validate();
  if (train_data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (net.in_c != train_data.c || net.in_h != train_data.h || net.in_w != train_data.w)
    throw std::invalid_argument("train: dataset shape does not match the net");

  const bool use_force = cfg.force.has_value() && cfg.force->lambda_s != 0.0;
  const ForceKind log_kind = cfg.force ? cfg.force->kind : ForceKind::L2Force;
  const std::vector<std::size_t> convs = net.conv_indices();

  SplitMix64 batch_rng(derive_seed(cfg.seed, "batches"));
  TrainResult res;
  res.log.push_back(detail::log_record(net, train_data, val_data, convs, log_kind, 0,
                                       cfg.schedule.rate_at(cfg.eta, 1)));

  typename MicroNet<S>::Grads grads;
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    const double lr = cfg.schedule.rate_at(cfg.eta, step);

    double batch_loss = 0;
    if (!cfg.force_only) {
      std::vector<std::size_t> idx(cfg.batch_size);
      std::vector<int> labels(cfg.batch_size);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        idx[i] = batch_rng.index(train_data.size());
        labels[i] = train_data.labels[idx[i]];
      }
      const Tensor4<S> batch = train_data.template gather<S>(idx);
      batch_loss = net.forward_backward(batch, labels, grads);
      if (!std::isfinite(batch_loss))
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step));
    } else {
      grads.weight.assign(net.layers.size(), {});
      grads.bias.assign(net.layers.size(), {});
    }

    // Force term at the pre-update weights, one delta per conv layer.
    std::vector<Mat> deltas;
    if (use_force) {
      deltas.reserve(convs.size());
      for (std::size_t li : convs)
        deltas.push_back(
            force_gradient(reshape_to_matrix(net.conv_bank(li)), *cfg.force).delta);
    }

    std::size_t conv_slot = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      std::visit(
          [&](auto& l) {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2D<S>> || std::is_same_v<L, Dense<S>>) {
              const std::vector<double>& gw = grads.weight[li];
              const std::vector<double>& gb = grads.bias[li];
              const double* delta = nullptr;
              if constexpr (std::is_same_v<L, Conv2D<S>>) {
                if (use_force) delta = deltas[conv_slot].a.data();
              }
              const double wd = cfg.force_only ? 0.0 : cfg.weight_decay;
              for (std::size_t k = 0; k < l.weight.size(); ++k) {
                double g = (gw.empty() ? 0.0 : gw[k]) + wd * double(l.weight[k]);
                if (delta) g -= cfg.force->lambda_s * delta[k];
                l.weight[k] = S(double(l.weight[k]) - lr * g);
              }
              if (!gb.empty())
                for (std::size_t k = 0; k < l.bias.size(); ++k)
                  l.bias[k] = S(double(l.bias[k]) - lr * gb[k]);
            }
          },
          net.layers[li]);
      if (std::holds_alternative<Conv2D<S>>(net.layers[li])) ++conv_slot;
    }

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      if (!net.finite())
        throw DivergenceError("train: non-finite parameters at step " +
                              std::to_string(step));
      res.log.push_back(
          detail::log_record(net, train_data, val_data, convs, log_kind, step, lr));
    }
    res.steps_run = step;
  }
  return res;
}

/// Fine-tunes a net whose conv layers were replaced by split pairs. The
/// coordination term stays off unless explicitly kept; callers follow the
/// convention of a 0.1x base learning rate when recovering accuracy.
template <class S>
TrainResult finetune_decomposed(MicroNet<S>& net, const Dataset& train_data,
                                const Dataset& val_data, TrainConfig cfg,
                                bool keep_force = false) {
  if (!keep_force) {
    cfg.force.reset();
    cfg.force_only = false;
  }
  return train(net, train_data, val_data, cfg);
}

}  // namespace forcelr

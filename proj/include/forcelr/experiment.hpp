#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "forcelr/archive.hpp"
#include "forcelr/dataset.hpp"
#include "forcelr/lowrank.hpp"
#include "forcelr/net.hpp"
#include "forcelr/rank_report.hpp"
#include "forcelr/train.hpp"
#include "json.hpp"

namespace forcelr {

inline LowRankMethod parse_method(const std::string& name) {
  if (name == "pca") return LowRankMethod::PCA;
  if (name == "svd") return LowRankMethod::SVD;
  if (name == "kmeans") return LowRankMethod::KMeans;
  throw std::invalid_argument("unknown method '" + name + "' (pca, svd, kmeans)");
}

inline const char* method_name(LowRankMethod m) {
  switch (m) {
    case LowRankMethod::PCA: return "pca";
    case LowRankMethod::SVD: return "svd";
    default: return "kmeans";
  }
}

inline LowRankFactorization factorize_method(const FilterMatrix& fm, LowRankMethod m,
                                             std::size_t rank, std::uint64_t seed) {
  switch (m) {
    case LowRankMethod::PCA: return pca_factorize(fm, rank);
    case LowRankMethod::SVD: return svd_factorize(fm, rank);
    default: return kmeans_factorize(fm, rank, seed);
  }
}

inline std::size_t method_rank(const FilterMatrix& fm, LowRankMethod m, double tau,
                               std::uint64_t seed) {
  switch (m) {
    case LowRankMethod::PCA: return select_rank(detail::pca_spectrum(fm), tau);
    case LowRankMethod::SVD: return select_rank_curve(svd_error_curve(fm), tau);
    default: return select_rank_curve(kmeans_error_curve(fm, seed), tau);
  }
}

// ---------------------------------------------------------------------------
// Net-level decomposition: each conv layer becomes a basis conv (M filters,
// original window/stride/pad, zero bias) followed by a 1x1 combine conv that
// carries the original bias.

struct DecomposeOptions {
  LowRankMethod method = LowRankMethod::PCA;
  double tau = kDefaultTau;
  std::vector<std::size_t> ranks;  // one per conv layer; overrides tau when set
  std::uint64_t seed = 0;
};

struct DecomposeReport {
  struct Layer {
    std::size_t layer_index = 0;  // position in the original stack
    std::size_t full_rank = 0;
    std::size_t rank = 0;
    double tail = 0;  // e_M / e_0 of the chosen factorization
  };
  std::vector<Layer> layers;

  nlohmann::json to_json(LowRankMethod method, double tau, bool explicit_ranks) const {
    nlohmann::json j{{"method", method_name(method)}, {"layers", nlohmann::json::array()}};
    if (explicit_ranks)
      j["ranks_explicit"] = true;
    else
      j["tau"] = tau;
    for (const auto& l : layers)
      j["layers"].push_back({{"index", l.layer_index},
                             {"full_rank", l.full_rank},
                             {"rank", l.rank},
                             {"tail_ratio", l.tail}});
    return j;
  }
};

template <class S>
DecomposeReport decompose_net(MicroNet<S>& net, const DecomposeOptions& opt) {
  const std::vector<std::size_t> convs = net.conv_indices();
  if (!opt.ranks.empty() && opt.ranks.size() != convs.size())
    throw std::invalid_argument("decompose: need one rank per conv layer");

  DecomposeReport report;
  std::vector<typename MicroNet<S>::Layer> rebuilt;
  std::size_t conv_no = 0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (!std::holds_alternative<Conv2D<S>>(net.layers[li])) {
      rebuilt.push_back(std::move(net.layers[li]));
      continue;
    }
    const auto& conv = std::get<Conv2D<S>>(net.layers[li]);
    const FilterBank bank = net.conv_bank(li);
    const FilterMatrix fm = reshape_to_matrix(bank);
    const std::uint64_t layer_seed = derive_seed(opt.seed, "decompose", li);
    const std::size_t rank = opt.ranks.empty()
                                 ? method_rank(fm, opt.method, opt.tau, layer_seed)
                                 : opt.ranks[conv_no];
    const LowRankFactorization fact = factorize_method(fm, opt.method, rank, layer_seed);
    const DecomposedLayer split = split_layer(bank, fact);

    Conv2D<S> basis;
    basis.in_c = conv.in_c;
    basis.n_filters = rank;
    basis.kernel = conv.kernel;
    basis.stride = conv.stride;
    basis.pad = conv.pad;
    basis.weight.assign(split.basis_layer.data.begin(), split.basis_layer.data.end());
    basis.bias.assign(rank, S(0));

    Conv2D<S> combine;
    combine.in_c = rank;
    combine.n_filters = conv.n_filters;
    combine.kernel = 1;
    combine.stride = 1;
    combine.pad = 0;
    combine.weight.assign(split.combine_layer.data.begin(),
                          split.combine_layer.data.end());
    combine.bias = conv.bias;

    report.layers.push_back(
        {li, conv.n_filters, rank, fact.reconstruction_error_pct});
    rebuilt.emplace_back(std::move(basis));
    rebuilt.emplace_back(std::move(combine));
    ++conv_no;
  }
  net.layers = std::move(rebuilt);
  return report;
}

// ---------------------------------------------------------------------------
// Multiply-accumulate cost walk (shapes only).

struct ConvCost {
  std::size_t layer_index = 0;
  std::size_t n = 0, c = 0, kh = 0, kw = 0;
  std::size_t out_h = 0, out_w = 0;
  double macs = 0;
};

template <class S>
std::vector<ConvCost> conv_costs(const MicroNet<S>& net) {
  std::vector<ConvCost> out;
  std::size_t h = net.in_h, w = net.in_w;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D<S>>) {
            ConvCost cost;
            cost.layer_index = li;
            cost.n = l.n_filters;
            cost.c = l.in_c;
            cost.kh = cost.kw = l.kernel;
            cost.out_h = l.out_dim(h);
            cost.out_w = l.out_dim(w);
            cost.macs = double(cost.n) * double(cost.c) * double(cost.kh) *
                        double(cost.kw) * double(cost.out_h) * double(cost.out_w);
            out.push_back(cost);
            h = cost.out_h;
            w = cost.out_w;
          } else if constexpr (std::is_same_v<L, MaxPool<S>>) {
            h = (h - l.k) / l.stride + 1;
            w = (w - l.k) / l.stride + 1;
          } else if constexpr (std::is_same_v<L, Dense<S>>) {
            h = 1;
            w = 1;
          }
        },
        net.layers[li]);
  }
  return out;
}

/// Pairs each original conv with its (basis, combine) successors by order.
/// Total speedup weights layers by their multiply-accumulate counts.
struct SpeedupReport {
  struct Row {
    std::size_t layer_index = 0;
    std::size_t full_rank = 0, rank = 0;
    double speedup = 0;
    double break_even = 0;
  };
  std::vector<Row> layers;
  double total = 0;
};

template <class S>
SpeedupReport speedup_report(const MicroNet<S>& full, const MicroNet<S>& decomposed) {
  const auto fc = conv_costs(full);
  const auto dc = conv_costs(decomposed);
  if (dc.size() != 2 * fc.size())
    throw std::invalid_argument("speedup: decomposed net must hold one split pair per conv");
  SpeedupReport rep;
  double macs_full = 0, macs_dec = 0;
  for (std::size_t j = 0; j < fc.size(); ++j) {
    const ConvCost& orig = fc[j];
    const ConvCost& basis = dc[2 * j];
    const ConvCost& combine = dc[2 * j + 1];
    if (basis.c != orig.c || combine.n != orig.n || basis.n != combine.c)
      throw std::invalid_argument("speedup: archive shapes do not line up");
    SpeedupReport::Row row;
    row.layer_index = orig.layer_index;
    row.full_rank = orig.n;
    row.rank = basis.n;
    row.speedup = orig.macs / (basis.macs + combine.macs);
    row.break_even = break_even_rank(orig.n, orig.c, orig.kh, orig.kw);
    rep.layers.push_back(row);
    macs_full += orig.macs;
    macs_dec += basis.macs + combine.macs;
  }
  rep.total = macs_full / macs_dec;
  return rep;
}

// ---------------------------------------------------------------------------
// Experiment spec: dataset + preset + a baseline phase and a force phase,
// swept over lambda_s. All randomness flows from the one spec seed.

struct DatasetSpec {
  std::string kind = "blobs";
  // blobs
  std::size_t classes = 2, train_samples = 256, val_samples = 128, size = 8;
  double noise = 0.1;
  // idx
  std::string train_images, train_labels, val_images, val_labels;

  static DatasetSpec from_json(const nlohmann::json& j) {
    DatasetSpec d;
    d.kind = j.value("kind", std::string("blobs"));
    if (d.kind == "blobs") {
      d.classes = j.value("classes", d.classes);
      d.train_samples = j.value("train_samples", d.train_samples);
      d.val_samples = j.value("val_samples", d.val_samples);
      d.size = j.value("size", d.size);
      d.noise = j.value("noise", d.noise);
    } else if (d.kind == "idx") {
      d.classes = j.at("classes").get<std::size_t>();
      d.train_images = j.at("train_images").get<std::string>();
      d.train_labels = j.at("train_labels").get<std::string>();
      d.val_images = j.at("val_images").get<std::string>();
      d.val_labels = j.at("val_labels").get<std::string>();
    } else {
      throw std::invalid_argument("dataset kind must be 'blobs' or 'idx'");
    }
    return d;
  }

  std::pair<Dataset, Dataset> load(std::uint64_t seed) const {
    if (kind == "blobs") {
      BlobConfig tr{classes, train_samples, size, noise, derive_seed(seed, "train-data")};
      BlobConfig va{classes, val_samples, size, noise, derive_seed(seed, "val-data")};
      return {make_blobs(tr), make_blobs(va)};
    }
    for (const std::string& p : {train_images, train_labels, val_images, val_labels})
      if (!std::filesystem::exists(p))
        throw std::invalid_argument("dataset file missing: " + p);
    return {load_idx_dataset(train_images, train_labels, classes),
            load_idx_dataset(val_images, val_labels, classes)};
  }
};

struct PhaseConfig {
  double eta = 0.05;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_steps = 300;
  std::size_t eval_every = 50;
  StepDecay schedule;

  static PhaseConfig from_json(const nlohmann::json& j) {
    PhaseConfig p;
    p.eta = j.value("eta", p.eta);
    p.weight_decay = j.value("weight_decay", p.weight_decay);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.max_steps = j.value("max_steps", p.max_steps);
    p.eval_every = j.value("eval_every", p.eval_every);
    p.schedule.gamma = j.value("decay_gamma", 1.0);
    p.schedule.every = j.value("decay_every", std::size_t{0});
    return p;
  }

  TrainConfig to_train_config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.eta = eta;
    cfg.weight_decay = weight_decay;
    cfg.batch_size = batch_size;
    cfg.max_steps = max_steps;
    cfg.eval_every = eval_every;
    cfg.schedule = schedule;
    cfg.seed = seed;
    return cfg;
  }
};

struct ExperimentSpec {
  DatasetSpec dataset;
  std::string arch = "tiny-convnet";
  std::uint64_t seed = 1;
  PhaseConfig baseline;
  PhaseConfig force_phase;
  std::optional<PhaseConfig> finetune_phase;
  ForceKind force_kind = ForceKind::L2Force;
  StepScaler scaler = StepScaler::FilterNorm;
  std::vector<double> lambda_sweep{0.001};
  std::vector<double> taus{kDefaultTau};
  std::vector<std::string> methods{"pca"};

  static ExperimentSpec from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    if (j.contains("dataset")) s.dataset = DatasetSpec::from_json(j["dataset"]);
    s.arch = j.value("arch", s.arch);
    if (s.arch != "tiny-convnet")
      throw std::invalid_argument("unknown architecture preset '" + s.arch + "'");
    s.seed = j.value("seed", s.seed);
    if (j.contains("baseline")) s.baseline = PhaseConfig::from_json(j["baseline"]);
    if (j.contains("force")) {
      s.force_phase = PhaseConfig::from_json(j["force"]);
      const std::string kind = j["force"].value("kind", std::string("l2"));
      if (kind == "l2")
        s.force_kind = ForceKind::L2Force;
      else if (kind == "l1")
        s.force_kind = ForceKind::L1Force;
      else
        throw std::invalid_argument("force kind must be 'l2' or 'l1'");
      const std::string sc = j["force"].value("scaler", std::string("filter-norm"));
      if (sc == "filter-norm")
        s.scaler = StepScaler::FilterNorm;
      else if (sc == "reciprocal-norm")
        s.scaler = StepScaler::ReciprocalNorm;
      else
        throw std::invalid_argument("scaler must be 'filter-norm' or 'reciprocal-norm'");
    } else {
      s.force_phase = s.baseline;
    }
    if (j.contains("finetune")) s.finetune_phase = PhaseConfig::from_json(j["finetune"]);
    if (j.contains("lambda_sweep"))
      s.lambda_sweep = j["lambda_sweep"].get<std::vector<double>>();
    if (j.contains("taus")) s.taus = j["taus"].get<std::vector<double>>();
    if (j.contains("methods"))
      s.methods = j["methods"].get<std::vector<std::string>>();
    if (s.lambda_sweep.empty()) throw std::invalid_argument("lambda_sweep is empty");
    if (s.taus.empty()) throw std::invalid_argument("taus is empty");
    if (s.methods.empty()) throw std::invalid_argument("methods is empty");
    for (const auto& m : s.methods) parse_method(m);
    for (double t : s.taus) detail::check_tau(t);
    return s;
  }

  static ExperimentSpec load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw std::invalid_argument("spec parse error: " + std::string(e.what()));
    }
    return from_json(j);
  }
};

struct ExperimentResult {
  struct Run {
    double lambda_s = 0;  // 0 is the baseline row
    std::filesystem::path archive_dir;
    TrainResult metrics;
    double final_val_acc = 0;
    std::vector<std::size_t> final_ranks;  // at taus[0]
  };
  std::vector<Run> runs;
  std::filesystem::path summary_csv;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_metrics_jsonl(const std::filesystem::path& path,
                                const TrainResult& res) {
  std::string out;
  for (const auto& rec : res.log) out += to_json(rec).dump() + "\n";
  write_file_atomic(path, out);
}

}  // namespace detail

/// Baseline phase, then one force continuation per lambda_s, each resumed
/// from the baseline weights. Writes per-run archives and metrics plus one
/// summary table.
inline ExperimentResult run_experiment(const ExperimentSpec& spec,
                                       const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  auto [train_data, val_data] = spec.dataset.load(spec.seed);

  MicroNet<float> baseline =
      build_net<float>(tiny_convnet_arch(train_data.classes), train_data.c,
                       train_data.h, train_data.w, train_data.classes);
  init_net(baseline, spec.seed);

  ExperimentResult result;
  fs::create_directories(out_dir);

  {
    TrainConfig cfg = spec.baseline.to_train_config(derive_seed(spec.seed, "baseline"));
    TrainResult metrics = train(baseline, train_data, val_data, cfg);
    const fs::path dir = out_dir / "baseline";
    save_archive(dir, baseline, spec.seed,
                 {{"phase", "baseline"}, {"steps", cfg.max_steps}});
    detail::write_metrics_jsonl(dir / "metrics.jsonl", metrics);
    ExperimentResult::Run run{0.0, dir, std::move(metrics), 0.0, {}};
    run.final_val_acc = run.metrics.log.back().val_acc;
    for (std::size_t li : baseline.conv_indices())
      run.final_ranks.push_back(
          pca_rank(reshape_to_matrix(baseline.conv_bank(li)), spec.taus[0]));
    result.runs.push_back(std::move(run));
  }

  for (std::size_t k = 0; k < spec.lambda_sweep.size(); ++k) {
    const double lambda = spec.lambda_sweep[k];
    MicroNet<float> net = load_archive(out_dir / "baseline").net;  // resume point
    ForceConfig force;
    force.kind = spec.force_kind;
    force.lambda_s = lambda;
    force.scaler = spec.scaler;
    TrainConfig cfg =
        spec.force_phase.to_train_config(derive_seed(spec.seed, "force", k));
    cfg.force = force;

    TrainResult metrics = train(net, train_data, val_data, cfg);
    const fs::path dir = out_dir / ("force_" + std::to_string(k));
    save_archive(dir, net, spec.seed,
                 {{"phase", "force"},
                  {"lambda_s", lambda},
                  {"kind", spec.force_kind == ForceKind::L2Force ? "l2" : "l1"},
                  {"steps", cfg.max_steps}});
    detail::write_metrics_jsonl(dir / "metrics.jsonl", metrics);
    ExperimentResult::Run run{lambda, dir, std::move(metrics), 0.0, {}};
    run.final_val_acc = run.metrics.log.back().val_acc;
    for (std::size_t li : net.conv_indices())
      run.final_ranks.push_back(
          pca_rank(reshape_to_matrix(net.conv_bank(li)), spec.taus[0]));
    result.runs.push_back(std::move(run));
  }

  std::string csv = "lambda_s,final_val_acc";
  for (std::size_t i = 0; i < result.runs[0].final_ranks.size(); ++i)
    csv += ",rank_conv" + std::to_string(i);
  csv += "\n";
  for (const auto& run : result.runs) {
    csv += detail::fmt_double(run.lambda_s) + "," + detail::fmt_double(run.final_val_acc);
    for (std::size_t r : run.final_ranks) csv += "," + std::to_string(r);
    csv += "\n";
  }
  result.summary_csv = out_dir / "summary.csv";
  detail::write_file_atomic(result.summary_csv, csv);
  return result;
}

}  // namespace forcelr

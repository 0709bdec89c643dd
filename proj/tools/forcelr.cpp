// forcelr: train, analyze, decompose, fine-tune, and verify filter-coordinated
// nets. All commands are deterministic given their seeds; FORCELR_THREADS caps
// any permitted parallelism (the trainer itself is single-threaded by contract).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "forcelr/archive.hpp"
#include "forcelr/experiment.hpp"
#include "forcelr/rank_report.hpp"
#include "forcelr/train.hpp"
#include "forcelr/verify.hpp"

namespace fs = std::filesystem;
using namespace forcelr;

namespace {

int check_threads_env() {
  const char* env = std::getenv("FORCELR_THREADS");
  if (!env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) {
    std::cerr << "FORCELR_THREADS must be a positive integer, got '" << env << "'\n";
    return -1;
  }
  return int(v);  // an upper bound; every code path here uses one thread
}

std::vector<std::size_t> parse_ranks_csv(const std::string& csv) {
  std::vector<std::size_t> out;
  std::size_t at = 0;
  while (at <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', at), csv.size());
    const std::string tok = csv.substr(at, comma - at);
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size() || v == 0)
      throw std::invalid_argument("--ranks must be positive integers, got '" + tok + "'");
    out.push_back(v);
    at = comma + 1;
  }
  return out;
}

int run_train(const std::string& spec_path, const std::string& out_dir,
              std::uint64_t seed, bool seed_set) {
  ExperimentSpec spec = ExperimentSpec::load(spec_path);
  if (seed_set) spec.seed = seed;
  const ExperimentResult result = run_experiment(spec, out_dir);
  for (const auto& run : result.runs) {
    std::printf("lambda_s=%-10g val_acc=%.4f ranks:", run.lambda_s, run.final_val_acc);
    for (std::size_t r : run.final_ranks) std::printf(" %zu", r);
    std::printf("  -> %s\n", run.archive_dir.string().c_str());
  }
  std::printf("summary: %s\n", result.summary_csv.string().c_str());
  return 0;
}

int run_analyze(const std::string& model_dir, double tau, const std::string& out_dir) {
  const ModelArchive ar = load_archive(model_dir);
  MicroNet<float> net = ar.net;
  const auto costs = conv_costs(net);

  RankReport report;
  std::size_t ci = 0;
  for (std::size_t li : net.conv_indices()) {
    const FilterMatrix fm = reshape_to_matrix(net.conv_bank(li));
    LayerRank lr;
    lr.layer_name = "layer" + std::to_string(li);
    lr.full_rank = fm.rows;
    lr.tau = tau;
    lr.error_curve = pca_error_curve(fm);
    lr.rank = select_rank_curve(lr.error_curve, tau);
    lr.rank_ratio = double(lr.rank) / double(lr.full_rank);
    const ConvCost& cost = costs[ci++];
    lr.theoretical_speedup = theoretical_speedup(cost.n, cost.c, cost.kh, cost.kw,
                                                 cost.out_h, cost.out_w, lr.rank);
    report.per_layer.push_back(std::move(lr));
  }

  const fs::path out = out_dir.empty() ? fs::path(model_dir) : fs::path(out_dir);
  fs::create_directories(out);
  detail::write_file_atomic(out / "rank_report.json", to_json(report).dump(2) + "\n");
  detail::write_file_atomic(out / "rank_report.csv", to_csv(report));
  std::printf("%s", to_csv(report).c_str());
  return 0;
}

int run_decompose(const std::string& model_dir, const std::string& method,
                  double tau, const std::string& ranks_csv, const std::string& out_dir,
                  std::uint64_t seed) {
  const ModelArchive ar = load_archive(model_dir);
  MicroNet<float> original = ar.net;
  MicroNet<float> net = ar.net;

  DecomposeOptions opt;
  opt.method = parse_method(method);
  opt.tau = tau;
  opt.seed = seed;
  if (!ranks_csv.empty()) opt.ranks = parse_ranks_csv(ranks_csv);
  const DecomposeReport report = decompose_net(net, opt);

  nlohmann::json provenance = ar.manifest.value("provenance", nlohmann::json::object());
  provenance["decompose"] = report.to_json(opt.method, opt.tau, !opt.ranks.empty());
  save_archive(out_dir, net, ar.manifest.value("seed", std::uint64_t{0}), provenance);

  const SpeedupReport sp = speedup_report(original, net);
  std::string csv = "layer,N,M,theoretical_speedup,break_even\n";
  for (const auto& row : sp.layers) {
    std::printf("layer%zu: N=%zu M=%zu speedup=%.4f break-even=%.2f\n", row.layer_index,
                row.full_rank, row.rank, row.speedup, row.break_even);
    csv += "layer" + std::to_string(row.layer_index) + "," +
           std::to_string(row.full_rank) + "," + std::to_string(row.rank) + "," +
           detail::fmt_double(row.speedup) + "," + detail::fmt_double(row.break_even) +
           "\n";
  }
  std::printf("total theoretical speedup: %.4f\n", sp.total);
  csv += "total,,," + detail::fmt_double(sp.total) + ",\n";
  detail::write_file_atomic(fs::path(out_dir) / "speedup.csv", csv);
  return 0;
}

int run_finetune(const std::string& model_dir, const std::string& spec_path,
                 const std::string& out_dir, std::uint64_t seed, bool seed_set) {
  ExperimentSpec spec = ExperimentSpec::load(spec_path);
  if (seed_set) spec.seed = seed;
  auto [train_data, val_data] = spec.dataset.load(spec.seed);

  const ModelArchive ar = load_archive(model_dir);
  MicroNet<float> net = ar.net;

  // Recovery convention: a tenth of the base rate unless the spec overrides.
  PhaseConfig phase = spec.finetune_phase.value_or(spec.baseline);
  if (!spec.finetune_phase) phase.eta = spec.baseline.eta * 0.1;
  TrainConfig cfg = phase.to_train_config(derive_seed(spec.seed, "finetune"));

  const TrainResult metrics = finetune_decomposed(net, train_data, val_data, cfg);
  nlohmann::json provenance = ar.manifest.value("provenance", nlohmann::json::object());
  provenance["finetune"] = {{"steps", cfg.max_steps}, {"eta", cfg.eta}};
  save_archive(out_dir, net, spec.seed, provenance);
  detail::write_metrics_jsonl(fs::path(out_dir) / "metrics.jsonl", metrics);
  std::printf("final val_acc=%.4f val_loss=%.6f -> %s\n", metrics.log.back().val_acc,
              metrics.log.back().val_loss, out_dir.c_str());
  return 0;
}

int run_verify(const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<PropertyResult> results = run_property_suite();
  for (const auto& r : results)
    std::printf("%s  %-28s worst=%.3e limit=%.3e  %s\n", r.pass ? "PASS" : "FAIL",
                r.name.c_str(), r.worst, r.limit, r.note.c_str());
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu properties in %.1fs\n", results.size(), secs);
  fs::create_directories(out_dir);
  detail::write_file_atomic(fs::path(out_dir) / "verify_report.json",
                            to_json(results).dump(2) + "\n");
  return all_pass(results) ? 0 : 1;
}

int run_speedup(const std::string& model_dir, const std::string& decomposed_dir,
                bool measure, const std::string& out_dir) {
  MicroNet<float> full = load_archive(model_dir).net;
  MicroNet<float> dec = load_archive(decomposed_dir).net;
  const SpeedupReport sp = speedup_report(full, dec);
  for (const auto& row : sp.layers)
    std::printf("layer%zu: N=%zu M=%zu speedup=%.4f break-even=%.2f\n", row.layer_index,
                row.full_rank, row.rank, row.speedup, row.break_even);
  std::printf("total theoretical speedup (mac-weighted): %.4f\n", sp.total);

  if (measure) {
    SplitMix64 rng(7);
    Tensor4<float> x(8, full.in_c, full.in_h, full.in_w);
    for (float& v : x.v) v = float(rng.uniform(-1.0, 1.0));
    auto time_net = [&](MicroNet<float>& net) {
      net.forward(x, false);  // warm up
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 20; ++i) net.forward(x, false);
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    const double tf = time_net(full), td = time_net(dec);
    std::printf("measured, machine-dependent: %.4f (full %.4fs / decomposed %.4fs)\n",
                td > 0 ? tf / td : 0.0, tf, td);
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::string csv = "layer,N,M,theoretical_speedup,break_even\n";
    for (const auto& row : sp.layers)
      csv += "layer" + std::to_string(row.layer_index) + "," +
             std::to_string(row.full_rank) + "," + std::to_string(row.rank) + "," +
             detail::fmt_double(row.speedup) + "," + detail::fmt_double(row.break_even) +
             "\n";
    csv += "total,,," + detail::fmt_double(sp.total) + ",\n";
    detail::write_file_atomic(fs::path(out_dir) / "speedup.csv", csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (check_threads_env() < 0) return 2;

  CLI::App app{"filter coordination, low-rank decomposition, and fine-tuning"};
  app.require_subcommand(1);

  std::string spec_path, model_path, out_dir, method = "pca", ranks_csv, decomposed_path;
  double tau = kDefaultTau;
  std::uint64_t seed = 0;
  bool measure = false;

  CLI::App* train_cmd = app.add_subcommand("train", "baseline phase plus lambda sweep");
  train_cmd->add_option("--spec", spec_path, "experiment spec (JSON)")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  auto* train_seed = train_cmd->add_option("--seed", seed, "override the spec seed");

  CLI::App* analyze_cmd = app.add_subcommand("analyze-ranks", "per-layer rank report");
  analyze_cmd->add_option("--model", model_path, "model archive directory")->required();
  analyze_cmd->add_option("--tau", tau, "error-percentage threshold");
  analyze_cmd->add_option("--out", out_dir, "report directory (default: the archive)");

  CLI::App* dec_cmd = app.add_subcommand("decompose", "split conv layers into pairs");
  dec_cmd->add_option("--model", model_path, "model archive directory")->required();
  dec_cmd->add_option("--method", method, "pca, svd, or kmeans");
  dec_cmd->add_option("--tau", tau, "error-percentage threshold");
  dec_cmd->add_option("--ranks", ranks_csv, "explicit per-conv ranks (overrides --tau)");
  dec_cmd->add_option("--out", out_dir, "decomposed archive directory")->required();
  dec_cmd->add_option("--seed", seed, "clustering seed");

  CLI::App* ft_cmd = app.add_subcommand("finetune", "recover accuracy after a split");
  ft_cmd->add_option("--model", model_path, "decomposed archive directory")->required();
  ft_cmd->add_option("--spec", spec_path, "experiment spec (JSON)")->required();
  ft_cmd->add_option("--out", out_dir, "output directory")->required();
  auto* ft_seed = ft_cmd->add_option("--seed", seed, "override the spec seed");

  CLI::App* verify_cmd = app.add_subcommand("verify", "numerical-invariant suite");
  verify_cmd->add_option("--out", out_dir, "report directory")->default_val(".");

  CLI::App* sp_cmd = app.add_subcommand("speedup", "compare full vs decomposed cost");
  sp_cmd->add_option("--model", model_path, "full model archive")->required();
  sp_cmd->add_option("decomposed", decomposed_path, "decomposed archive")->required();
  sp_cmd->add_flag("--measure", measure, "also time both forward passes here");
  sp_cmd->add_option("--out", out_dir, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return run_train(spec_path, out_dir, seed, train_seed->count() > 0);
    if (*analyze_cmd) return run_analyze(model_path, tau, out_dir);
    if (*dec_cmd) return run_decompose(model_path, method, tau, ranks_csv, out_dir, seed);
    if (*ft_cmd) return run_finetune(model_path, spec_path, out_dir, seed, ft_seed->count() > 0);
    if (*verify_cmd) return run_verify(out_dir);
    if (*sp_cmd) return run_speedup(model_path, decomposed_path, measure, out_dir);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

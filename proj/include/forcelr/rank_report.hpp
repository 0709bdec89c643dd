#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "forcelr/matrix.hpp"
#include "json.hpp"

namespace forcelr {

struct LayerRank {
  std::string layer_name;
  std::size_t full_rank = 0;  // N
  std::size_t rank = 0;       // selected M
  double rank_ratio = 0.0;    // M / N
  double tau = 0.0;
  Vec error_curve;            // e_M/e_0, index = M, length N+1
  double theoretical_speedup = 0.0;
};

struct RankReport {
  std::vector<LayerRank> per_layer;
};

inline nlohmann::json to_json(const RankReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : report.per_layer) {
    layers.push_back({{"layer", l.layer_name},
                      {"N", l.full_rank},
                      {"M", l.rank},
                      {"rank_ratio", l.rank_ratio},
                      {"tau", l.tau},
                      {"error_curve", l.error_curve},
                      {"theoretical_speedup", l.theoretical_speedup}});
  }
  return nlohmann::json{{"layers", layers}};
}

inline std::string to_csv(const RankReport& report) {
  std::ostringstream os;
  os << "layer,N,M,rank_ratio,tau,theoretical_speedup\n";
  for (const auto& l : report.per_layer)
    os << l.layer_name << ',' << l.full_rank << ',' << l.rank << ',' << l.rank_ratio
       << ',' << l.tau << ',' << l.theoretical_speedup << '\n';
  return os.str();
}

}  // namespace forcelr

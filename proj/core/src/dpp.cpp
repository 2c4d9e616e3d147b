#include "aoi/dpp.hpp"

#include <algorithm>

namespace aoi {

double queue_update(double backlog, Action a, double gamma_max) {
  return std::max(backlog - gamma_max + tx_cost(a), 0.0);
}

namespace {

// Returns the chosen source (1-based) or 0.
int pick(const SystemState& state, double backlog, const SystemConfig& cfg, double scale,
         bool relay_link) {
  int best_source = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < state.sources.size(); ++i) {
    const int gap = relay_link ? state.sources[i].y : state.sources[i].x;
    const double score = scale * cfg.weights[i] * gap;
    if (score > best_score) {
      best_score = score;
      best_source = static_cast<int>(i) + 1;
    }
  }
  if (best_source == 0 || best_score < backlog) return 0;
  return best_source;
}

}  // namespace

Action dpp_decide(const SystemState& state, double backlog, const SystemConfig& cfg,
                  const DppConfig& dpp) {
  return Action{pick(state, backlog, cfg, dpp.tradeoff * cfg.p1, false),
                pick(state, backlog, cfg, dpp.tradeoff * cfg.p2, true)};
}

double stability_bound(const SystemConfig& cfg, const DppConfig& dpp, int bound) {
  double weight_sum = 0.0;
  for (double w : cfg.weights) weight_sum += w;
  const double penalty = dpp.tradeoff * (5.0 * bound + 4.0) * weight_sum;
  return (drift_constant(cfg.gamma_max) + penalty) / cfg.gamma_max;
}

}  // namespace aoi

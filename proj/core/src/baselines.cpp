#include "aoi/baselines.hpp"

namespace aoi {

namespace {

int argmax_gap(const SystemState& state, bool relay_link) {
  int best = 0;
  int best_gap = 0;
  for (std::size_t i = 0; i < state.sources.size(); ++i) {
    const int gap = relay_link ? state.sources[i].y : state.sources[i].x;
    if (gap > best_gap) {
      best_gap = gap;
      best = static_cast<int>(i) + 1;
    }
  }
  return best;
}

}  // namespace

Action greedy_decide(const SystemState& state, BaselineState& baseline, double gamma_max) {
  Action a;
  if (baseline.average() <= gamma_max) {
    a.alpha = argmax_gap(state, false);
    a.beta = argmax_gap(state, true);
  }
  baseline.record(a);
  return a;
}

Action random_decide(RandomStream& rng, int num_sources) {
  const auto choices = static_cast<std::uint64_t>(num_sources + 1);
  const int alpha = static_cast<int>(rng.below(choices));
  const int beta = static_cast<int>(rng.below(choices));
  return Action{alpha, beta};
}

}  // namespace aoi

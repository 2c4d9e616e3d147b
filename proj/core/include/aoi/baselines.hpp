#pragma once

#include <cstdint>

#include "aoi/model.hpp"
#include "aoi/random.hpp"

namespace aoi {

/// Running transmission count of the greedy baseline.
struct BaselineState {
  std::uint64_t transmissions = 0;
  std::uint64_t slots = 0;

  /// Average transmissions per slot so far; 0 before the first slot.
  double average() const {
    return slots == 0 ? 0.0 : static_cast<double>(transmissions) / static_cast<double>(slots);
  }
  void record(Action a) {
    transmissions += static_cast<std::uint64_t>(tx_cost(a));
    ++slots;
  }
};

/// While the running average is within budget, schedule the source with the
/// largest unweighted relative AoI on each link (lowest index on ties, idle
/// when every gap is zero); otherwise idle both links. Updates `baseline`.
Action greedy_decide(const SystemState& state, BaselineState& baseline, double gamma_max);

/// Both decisions uniform on {0, ..., I}, drawn from `rng`.
Action random_decide(RandomStream& rng, int num_sources);

}  // namespace aoi

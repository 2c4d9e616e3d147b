#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aoi/model.hpp"

namespace aoi {

/// Deterministic stationary policy over the enumerated bounded state space.
struct PolicyTable {
  std::vector<Action> actions;  // indexed by joint state index

  // Provenance.
  double lambda = 0.0;
  int sweeps = 0;
  double bellman_residual = 0.0;
  std::size_t reference_state = 0;

  std::size_t size() const { return actions.size(); }
  const Action& operator[](std::size_t s) const { return actions[s]; }
};

}  // namespace aoi

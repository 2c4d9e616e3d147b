#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/random.hpp"

namespace aoi {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment parameters of the two-hop relaying system.
///
/// `aoi_bound` empty means the AoI values are left unbounded. A finite bound
/// caps every AoI (transmitter, relay and destination) at N.
struct SystemConfig {
  int num_sources = 1;
  std::optional<int> aoi_bound;
  std::vector<double> arrival_rates;  // mu_i, one per source
  std::vector<double> weights;        // w_i, one per source
  double p1 = 1.0;                    // transmitter -> relay success
  double p2 = 1.0;                    // relay -> destination success
  double gamma_max = 1.0;             // average transmission budget per slot

  bool bounded() const { return aoi_bound.has_value(); }
  int bound() const { return aoi_bound.value(); }

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  /// Convenience constructor for homogeneous unit weights.
  static SystemConfig make(std::vector<double> mu, double p1, double p2, double gamma_max,
                           std::optional<int> bound, std::vector<double> weights = {});
};

/// Per-source state: AoI at the transmitter plus the two relative AoIs
/// x = psi - theta and y = delta - psi.
struct SourceState {
  int theta = 0;
  int x = 0;
  int y = 0;

  int relay_aoi() const { return theta + x; }
  int dest_aoi() const { return theta + x + y; }

  friend bool operator==(const SourceState&, const SourceState&) = default;
};

struct SystemState {
  std::vector<SourceState> sources;

  static SystemState zeros(int num_sources) {
    return SystemState{std::vector<SourceState>(static_cast<std::size_t>(num_sources))};
  }

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

/// Transmitter decision alpha and relay decision beta; 0 idles the link,
/// i in 1..I schedules source i.
struct Action {
  int alpha = 0;
  int beta = 0;

  friend bool operator==(const Action&, const Action&) = default;
};

/// Actions are indexed as alpha * (I + 1) + beta.
int num_actions(int num_sources);
Action decode_action(int index, int num_sources);
int encode_action(Action a, int num_sources);

/// The random outcome of one slot. Channel flags are meaningful only when the
/// corresponding link was active.
struct SlotDraws {
  std::vector<bool> arrivals;
  bool relay_success = false;
  bool dest_success = false;
};

struct StepOutcome {
  SlotDraws draws;
  SystemState next_state;
  int tx_cost = 0;
};

struct Tilde {
  int theta;
  int x;
  int y;
};

/// Capped one-slot-ahead quantities used by the bounded transition rows.
Tilde tilde_triplet(const SourceState& s, int bound);

bool is_valid(const SourceState& s, std::optional<int> bound);
bool is_valid(const SystemState& s, const SystemConfig& cfg);
bool is_valid(Action a, int num_sources);

/// Deterministic successor of one source given the slot's draws.
/// Bounded mode applies the min-capped AoI recursions; unbounded mode applies
/// the compact relative-AoI update. The relay forwards the packet held at the
/// start of the slot.
SourceState advance_source(const SourceState& s, int source, Action a, bool arrival,
                           bool relay_success, bool dest_success, std::optional<int> bound);

SystemState advance(const SystemState& s, Action a, const SlotDraws& draws,
                    const SystemConfig& cfg);

/// Samples one slot. Arrivals come from `streams.arrivals`; a channel stream
/// is consumed only when its link transmits.
StepOutcome step(const SystemState& s, Action a, const SystemConfig& cfg, RandomStreams& streams);

/// Weighted sum of destination AoIs.
double aoi_cost(const SystemState& s, const SystemConfig& cfg);

int tx_cost(Action a);

/// Maps an arbitrary nonnegative state into the simplex theta + x + y <= N by
/// truncating y first, then x, then theta.
SourceState clamp_to_bound(const SourceState& s, int bound);
SystemState clamp_to_bound(const SystemState& s, int bound);

std::string to_string(const SystemState& s);

}  // namespace aoi

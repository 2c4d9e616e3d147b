#pragma once

#include "aoi/model.hpp"

namespace aoi {

/// Virtual queue tracking cumulative overshoot of the transmission budget.
struct VirtualQueue {
  double backlog = 0.0;
};

struct DppConfig {
  double tradeoff = 100.0;  // V

  void validate() const {
    if (!(tradeoff >= 0.0)) throw ConfigError("dpp tradeoff V must be nonnegative");
  }
};

/// max(H - gamma_max + D(a), 0).
double queue_update(double backlog, Action a, double gamma_max);

/// Per-slot drift-plus-penalty rule. Each link schedules the source with the
/// largest V * p * w_i * (relative AoI) when that score reaches the backlog;
/// ties go to the lowest source index, and a zero best score idles the link.
/// Works on unbounded states.
Action dpp_decide(const SystemState& state, double backlog, const SystemConfig& cfg,
                  const DppConfig& dpp);

/// Upper bound on the long-run mean backlog, (B + V(5N+4) sum w) / gamma_max
/// with B = gamma_max^2 / 2 + 2.
double stability_bound(const SystemConfig& cfg, const DppConfig& dpp, int bound);

/// The drift constant B.
inline double drift_constant(double gamma_max) { return 0.5 * gamma_max * gamma_max + 2.0; }

/// Stateful wrapper owned by one simulation.
class DppPolicy {
 public:
  DppPolicy(SystemConfig cfg, DppConfig dpp) : cfg_(std::move(cfg)), dpp_(dpp) { dpp_.validate(); }

  Action decide(const SystemState& s) const { return dpp_decide(s, queue_.backlog, cfg_, dpp_); }
  void observe(Action a) { queue_.backlog = queue_update(queue_.backlog, a, cfg_.gamma_max); }
  double backlog() const { return queue_.backlog; }

 private:
  SystemConfig cfg_;
  DppConfig dpp_;
  VirtualQueue queue_;
};

}  // namespace aoi

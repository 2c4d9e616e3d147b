#include "aoi/model.hpp"

#include <algorithm>
#include <sstream>

namespace aoi {

void SystemConfig::validate() const {
  if (num_sources < 1) throw ConfigError("num_sources must be positive");
  const auto n = static_cast<std::size_t>(num_sources);
  if (arrival_rates.size() != n) throw ConfigError("arrival_rates must have one entry per source");
  if (weights.size() != n) throw ConfigError("weights must have one entry per source");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(arrival_rates[i] > 0.0 && arrival_rates[i] <= 1.0))
      throw ConfigError("arrival rate of source " + std::to_string(i + 1) + " must lie in (0,1]");
    if (!(weights[i] > 0.0))
      throw ConfigError("weight of source " + std::to_string(i + 1) + " must be positive");
  }
  if (!(p1 > 0.0 && p1 <= 1.0)) throw ConfigError("p1 must lie in (0,1]");
  if (!(p2 > 0.0 && p2 <= 1.0)) throw ConfigError("p2 must lie in (0,1]");
  if (!(gamma_max > 0.0 && gamma_max <= 2.0)) throw ConfigError("gamma_max must lie in (0,2]");
  if (aoi_bound && *aoi_bound < 2) throw ConfigError("aoi_bound must be at least 2");
}

SystemConfig SystemConfig::make(std::vector<double> mu, double p1, double p2, double gamma_max,
                                std::optional<int> bound, std::vector<double> weights) {
  SystemConfig cfg;
  cfg.num_sources = static_cast<int>(mu.size());
  cfg.arrival_rates = std::move(mu);
  cfg.weights = weights.empty() ? std::vector<double>(cfg.arrival_rates.size(), 1.0)
                                : std::move(weights);
  cfg.p1 = p1;
  cfg.p2 = p2;
  cfg.gamma_max = gamma_max;
  cfg.aoi_bound = bound;
  cfg.validate();
  return cfg;
}

int num_actions(int num_sources) { return (num_sources + 1) * (num_sources + 1); }

Action decode_action(int index, int num_sources) {
  return Action{index / (num_sources + 1), index % (num_sources + 1)};
}

int encode_action(Action a, int num_sources) { return a.alpha * (num_sources + 1) + a.beta; }

Tilde tilde_triplet(const SourceState& s, int bound) {
  const int t1 = std::min(s.theta + 1, bound);
  const int t2 = std::min(s.x + s.theta + 1, bound);
  const int t3 = std::min(s.y + s.x + s.theta + 1, bound);
  return Tilde{t1, t2 - t1, t3 - t2};
}

bool is_valid(const SourceState& s, std::optional<int> bound) {
  if (s.theta < 0 || s.x < 0 || s.y < 0) return false;
  return !bound || s.dest_aoi() <= *bound;
}

bool is_valid(const SystemState& s, const SystemConfig& cfg) {
  if (static_cast<int>(s.sources.size()) != cfg.num_sources) return false;
  return std::all_of(s.sources.begin(), s.sources.end(),
                     [&](const SourceState& src) { return is_valid(src, cfg.aoi_bound); });
}

bool is_valid(Action a, int num_sources) {
  return a.alpha >= 0 && a.alpha <= num_sources && a.beta >= 0 && a.beta <= num_sources;
}

SourceState advance_source(const SourceState& s, int source, Action a, bool arrival,
                           bool relay_success, bool dest_success, std::optional<int> bound) {
  const bool relay_gets = a.alpha == source && relay_success;
  const bool dest_gets = a.beta == source && dest_success;

  if (!bound) {
    SourceState next;
    next.theta = arrival ? 0 : s.theta + 1;
    next.x = (relay_gets ? 0 : s.x) + (arrival ? s.theta + 1 : 0);
    next.y = (dest_gets ? 0 : s.y) + (relay_gets ? s.x : 0);
    return next;
  }

  const int n = *bound;
  const int psi = s.relay_aoi();
  const int delta = s.dest_aoi();
  const int theta_next = arrival ? 0 : std::min(s.theta + 1, n);
  const int psi_next = relay_gets ? std::min(s.theta + 1, n) : std::min(psi + 1, n);
  const int delta_next = dest_gets ? std::min(psi + 1, n) : std::min(delta + 1, n);
  return SourceState{theta_next, psi_next - theta_next, delta_next - psi_next};
}

SystemState advance(const SystemState& s, Action a, const SlotDraws& draws,
                    const SystemConfig& cfg) {
  SystemState next;
  next.sources.reserve(s.sources.size());
  for (std::size_t i = 0; i < s.sources.size(); ++i) {
    next.sources.push_back(advance_source(s.sources[i], static_cast<int>(i) + 1, a,
                                          draws.arrivals[i], draws.relay_success,
                                          draws.dest_success, cfg.aoi_bound));
  }
  return next;
}

StepOutcome step(const SystemState& s, Action a, const SystemConfig& cfg, RandomStreams& streams) {
  StepOutcome out;
  out.draws.arrivals.resize(s.sources.size());
  for (std::size_t i = 0; i < s.sources.size(); ++i)
    out.draws.arrivals[i] = streams.arrivals.bernoulli(cfg.arrival_rates[i]);
  if (a.alpha != 0) out.draws.relay_success = streams.channel1.bernoulli(cfg.p1);
  if (a.beta != 0) out.draws.dest_success = streams.channel2.bernoulli(cfg.p2);
  out.next_state = advance(s, a, out.draws, cfg);
  out.tx_cost = tx_cost(a);
  return out;
}

double aoi_cost(const SystemState& s, const SystemConfig& cfg) {
  double total = 0.0;
  for (std::size_t i = 0; i < s.sources.size(); ++i)
    total += cfg.weights[i] * static_cast<double>(s.sources[i].dest_aoi());
  return total;
}

int tx_cost(Action a) { return (a.alpha != 0 ? 1 : 0) + (a.beta != 0 ? 1 : 0); }

SourceState clamp_to_bound(const SourceState& s, int bound) {
  SourceState out = s;
  int excess = out.dest_aoi() - bound;
  for (int* part : {&out.y, &out.x, &out.theta}) {
    if (excess <= 0) break;
    const int cut = std::min(*part, excess);
    *part -= cut;
    excess -= cut;
  }
  return out;
}

SystemState clamp_to_bound(const SystemState& s, int bound) {
  SystemState out = s;
  for (auto& src : out.sources) src = clamp_to_bound(src, bound);
  return out;
}

std::string to_string(const SystemState& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.sources.size(); ++i) {
    if (i) os << ", ";
    os << s.sources[i].theta << ',' << s.sources[i].x << ',' << s.sources[i].y;
  }
  os << ')';
  return os.str();
}

}  // namespace aoi

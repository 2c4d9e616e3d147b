#include "aoi/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace aoi {

void SolverConfig::validate() const {
  if (!(zeta > 0.0)) throw ConfigError("solver zeta must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("solver epsilon must be positive");
  if (!(lambda_minus >= 0.0)) throw ConfigError("solver lambda_minus must be nonnegative");
  if (!(lambda_minus < lambda_plus)) throw ConfigError("solver needs lambda_minus < lambda_plus");
  if (max_sweeps < 1 || max_bisections < 1) throw ConfigError("solver iteration caps must be positive");
  if (!(stationary_tolerance > 0.0)) throw ConfigError("stationary tolerance must be positive");
}

LagrangianMdp::LagrangianMdp(const TransitionKernel& kernel, const SystemConfig& cfg)
    : kernel_(&kernel), cfg_(cfg) {
  const auto& indexer = kernel.indexer();
  if (!cfg.bounded() || cfg.bound() != indexer.bound() || cfg.num_sources != indexer.num_sources())
    throw ConfigError("configuration does not match the kernel's state space");
  state_cost_.resize(indexer.size());
  for (std::size_t s = 0; s < indexer.size(); ++s) {
    double c = 0.0;
    for (int i = 0; i < cfg.num_sources; ++i)
      c += cfg.weights[i] * indexer.local_state(indexer.local_of(s, i)).dest_aoi();
    state_cost_[s] = c;
  }
  action_tx_.resize(static_cast<std::size_t>(kernel.num_actions()));
  for (int a = 0; a < kernel.num_actions(); ++a)
    action_tx_[a] = tx_cost(decode_action(a, cfg.num_sources));
}

double lagrangian_cost(const SystemState& s, Action a, double lambda, const SystemConfig& cfg) {
  return aoi_cost(s, cfg) + lambda * (tx_cost(a) - cfg.gamma_max);
}

RviaWorkspace RviaWorkspace::initial(std::size_t num_states) {
  return RviaWorkspace{std::vector<double>(num_states, 0.0), std::vector<double>(num_states, 0.0),
                       std::vector<double>(num_states, 1.0)};
}

namespace {

inline double q_value(const LagrangianMdp& mdp, std::size_t s, int a, double lambda,
                      const std::vector<double>& h) {
  double q = mdp.cost(s, a, lambda);
  for (const auto& succ : mdp.kernel().successors(s, a)) q += succ.probability * h[succ.next];
  return q;
}

}  // namespace

SweepStats rvia_sweep(RviaWorkspace& ws, const LagrangianMdp& mdp, double lambda,
                      bool use_structure, std::size_t reference_state, PolicyTable& policy) {
  const auto& indexer = mdp.kernel().indexer();
  const std::size_t n = mdp.num_states();
  const int sources = indexer.num_sources();
  const int n_actions = mdp.num_actions();
  if (ws.value.size() != n || ws.relative.size() != n || ws.relative_old.size() != n)
    throw std::invalid_argument("workspace does not match the state space");
  if (reference_state >= n) throw std::out_of_range("reference state outside the state space");

  policy.actions.resize(n);
  SweepStats stats;
  // Bit i set when some s - k*e_y(i) chose beta = i earlier in this sweep.
  std::vector<std::uint32_t> chain(use_structure ? n : 0, 0);
  const auto& h = ws.relative;

  for (std::size_t s = 0; s < n; ++s) {
    int forced_source = 0;
    if (use_structure) {
      std::uint32_t bits = 0;
      for (int i = 0; i < sources; ++i) {
        if (indexer.local_state(indexer.local_of(s, i)).y == 0) continue;
        const std::size_t pred = s - indexer.stride(i);
        if (policy.actions[pred].beta == i + 1 || (chain[pred] >> i) & 1U) bits |= 1U << i;
      }
      chain[s] = bits;
      if (bits != 0) {
        if ((bits & (bits - 1)) == 0) {
          while (!((bits >> forced_source) & 1U)) ++forced_source;
          ++forced_source;
        } else {
          ++stats.ambiguous_states;
        }
      }
    }

    double best = std::numeric_limits<double>::infinity();
    int best_action = 0;
    if (forced_source != 0) {
      ++stats.restricted_states;
      for (int alpha = 0; alpha <= sources; ++alpha) {
        const int a = alpha * (sources + 1) + forced_source;
        const double q = q_value(mdp, s, a, lambda, h);
        if (q < best) {
          best = q;
          best_action = a;
        }
      }
    } else {
      for (int a = 0; a < n_actions; ++a) {
        const double q = q_value(mdp, s, a, lambda, h);
        if (q < best) {
          best = q;
          best_action = a;
        }
      }
    }
    ws.value[s] = best;
    policy.actions[s] = decode_action(best_action, sources);
  }

  const double v_ref = ws.value[reference_state];
  std::swap(ws.relative_old, ws.relative);
  double span = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    ws.relative[s] = ws.value[s] - v_ref;
    span = std::max(span, std::abs(ws.relative[s] - ws.relative_old[s]));
  }
  stats.span = span;
  return stats;
}

double bellman_residual(const LagrangianMdp& mdp, double lambda, const std::vector<double>& value,
                        const std::vector<double>& relative) {
  double worst = 0.0;
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < mdp.num_actions(); ++a)
      best = std::min(best, q_value(mdp, s, a, lambda, relative));
    worst = std::max(worst, std::abs(best - value[s]));
  }
  return worst;
}

PolicyTable greedy_policy(const LagrangianMdp& mdp, double lambda,
                          const std::vector<double>& relative) {
  PolicyTable policy;
  policy.lambda = lambda;
  policy.actions.resize(mdp.num_states());
  const int sources = mdp.config().num_sources;
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    double best = std::numeric_limits<double>::infinity();
    int best_action = 0;
    for (int a = 0; a < mdp.num_actions(); ++a) {
      const double q = q_value(mdp, s, a, lambda, relative);
      if (q < best) {
        best = q;
        best_action = a;
      }
    }
    policy.actions[s] = decode_action(best_action, sources);
  }
  return policy;
}

MdpSolution solve_mdp(const LagrangianMdp& mdp, double lambda, const SolverConfig& solver) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
  RviaWorkspace ws = RviaWorkspace::initial(mdp.num_states());
  MdpSolution out;
  double span = std::numeric_limits<double>::infinity();
  while (span > solver.epsilon) {
    if (out.sweeps >= solver.max_sweeps) {
      throw SolverError("RVIA did not converge within " + std::to_string(solver.max_sweeps) +
                            " sweeps (lambda=" + std::to_string(lambda) +
                            ", span=" + std::to_string(span) + ")",
                        span);
    }
    const SweepStats stats =
        rvia_sweep(ws, mdp, lambda, solver.use_structure, solver.reference_state, out.policy);
    span = stats.span;
    out.restricted_states = stats.restricted_states;
    ++out.sweeps;
  }
  out.span = span;
  out.gain = ws.value[solver.reference_state];
  out.policy.lambda = lambda;
  out.policy.sweeps = out.sweeps;
  out.policy.reference_state = solver.reference_state;
  out.policy.bellman_residual = bellman_residual(mdp, lambda, ws.value, ws.relative);
  out.value = std::move(ws.value);
  out.relative = std::move(ws.relative);
  return out;
}

std::vector<double> stationary_distribution(const SparseChain& chain, double tolerance,
                                            int max_iterations, int* iterations) {
  const std::size_t n = chain.num_states();
  std::vector<double> dist(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  double change = std::numeric_limits<double>::infinity();
  int it = 0;
  while (change > tolerance) {
    if (it >= max_iterations)
      throw SolverError("power iteration did not converge (L1 change " + std::to_string(change) +
                            ")",
                        change);
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double mass = dist[s];
      if (mass == 0.0) continue;
      for (const auto& e : chain.row(s)) next[e.next] += mass * e.probability;
    }
    double total = 0.0;
    for (double v : next) total += v;
    change = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      next[s] /= total;
      change += std::abs(next[s] - dist[s]);
    }
    dist.swap(next);
    ++it;
  }
  if (iterations) *iterations = it;
  return dist;
}

PolicyMetrics evaluate_policy(const LagrangianMdp& mdp, const PolicyTable& policy,
                              const SolverConfig& solver) {
  PolicyMetrics m;
  const SparseChain chain = induced_chain(mdp.kernel(), policy);
  m.stationary = stationary_distribution(chain, solver.stationary_tolerance,
                                         solver.max_power_iterations, &m.iterations);
  const int sources = mdp.config().num_sources;
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    m.ws_aaoi += m.stationary[s] * mdp.state_cost(s);
    m.avg_tx += m.stationary[s] * mdp.action_tx(encode_action(policy[s], sources));
  }
  return m;
}

BisectionResult bisect(const LagrangianMdp& mdp, const SolverConfig& solver) {
  solver.validate();
  const double gamma = mdp.config().gamma_max;
  BisectionResult result;

  // Solutions are deterministic in lambda, so repeated probes reuse them.
  std::map<double, std::pair<MdpSolution, PolicyMetrics>> cache;
  auto probe = [&](double lambda) -> const std::pair<MdpSolution, PolicyMetrics>& {
    auto it = cache.find(lambda);
    if (it != cache.end()) return it->second;
    MdpSolution sol = solve_mdp(mdp, lambda, solver);
    PolicyMetrics metrics = evaluate_policy(mdp, sol.policy, solver);
    result.trace.push_back(
        BisectionStep{lambda, metrics.ws_aaoi, metrics.avg_tx, sol.sweeps, metrics.avg_tx <= gamma});
    return cache.emplace(lambda, std::make_pair(std::move(sol), std::move(metrics)))
        .first->second;
  };

  double lo = solver.lambda_minus;
  double hi = solver.lambda_plus;

  if (probe(lo).second.avg_tx <= gamma) {
    if (lo > 0.0 && probe(0.0).second.avg_tx > gamma) {
      hi = lo;
      lo = 0.0;
    } else {
      const auto& [sol, metrics] = probe(0.0);
      result.constraint_slack = true;
      result.lambda_plus = result.lambda_minus = 0.0;
      result.plus = result.minus = sol;
      result.plus_metrics = result.minus_metrics = metrics;
      return result;
    }
  }

  int expansions = 0;
  while (probe(hi).second.avg_tx > gamma) {
    if (++expansions > solver.max_expansions)
      throw SolverError("no feasible lambda found while expanding the bracket",
                        probe(hi).second.avg_tx);
    lo = hi;
    hi *= 2.0;
  }

  int iterations = 0;
  while (std::abs(hi - lo) >= solver.zeta && iterations++ < solver.max_bisections) {
    const double mid = 0.5 * (hi + lo);
    if (probe(mid).second.avg_tx > gamma)
      lo = mid;
    else
      hi = mid;
  }

  result.lambda_plus = hi;
  result.lambda_minus = lo;
  std::tie(result.plus, result.plus_metrics) = probe(hi);
  std::tie(result.minus, result.minus_metrics) = probe(lo);
  return result;
}

namespace {

std::vector<SwitchingViolation> switching_along(const PolicyTable& policy,
                                                const StateIndexer& indexer, bool beta_axis) {
  std::vector<SwitchingViolation> out;
  for (std::size_t s = 0; s < indexer.size(); ++s) {
    const int chosen = beta_axis ? policy[s].beta : policy[s].alpha;
    if (chosen == 0) continue;
    const int i = chosen - 1;
    SourceState up = indexer.local_state(indexer.local_of(s, i));
    (beta_axis ? up.y : up.x) += 1;
    const int local_up = indexer.local_index(up);
    if (local_up < 0) continue;
    const std::size_t higher =
        s + (static_cast<std::size_t>(local_up) - indexer.local_of(s, i)) * indexer.stride(i);
    const int chosen_up = beta_axis ? policy[higher].beta : policy[higher].alpha;
    if (chosen_up != chosen) out.push_back(SwitchingViolation{s, chosen, higher});
  }
  return out;
}

}  // namespace

std::vector<SwitchingViolation> verify_switching(const PolicyTable& policy,
                                                 const StateIndexer& indexer) {
  if (policy.size() != indexer.size()) throw std::invalid_argument("policy/indexer size mismatch");
  return switching_along(policy, indexer, true);
}

std::vector<SwitchingViolation> alpha_switching_report(const PolicyTable& policy,
                                                       const StateIndexer& indexer) {
  if (policy.size() != indexer.size()) throw std::invalid_argument("policy/indexer size mismatch");
  return switching_along(policy, indexer, false);
}

std::vector<MonotonicityViolation> verify_value_monotonicity(const std::vector<double>& value,
                                                             const StateIndexer& indexer,
                                                             double tolerance) {
  if (value.size() != indexer.size()) throw std::invalid_argument("value/indexer size mismatch");
  std::vector<MonotonicityViolation> out;
  for (std::size_t s = 0; s < indexer.size(); ++s) {
    for (int i = 0; i < indexer.num_sources(); ++i) {
      const int local = indexer.local_of(s, i);
      const SourceState base = indexer.local_state(local);
      for (int component = 0; component < 3; ++component) {
        SourceState up = base;
        (component == 0 ? up.theta : component == 1 ? up.x : up.y) += 1;
        const int local_up = indexer.local_index(up);
        if (local_up < 0) continue;
        const std::size_t t = s + (static_cast<std::size_t>(local_up) - local) * indexer.stride(i);
        if (value[t] < value[s] - tolerance)
          out.push_back(MonotonicityViolation{s, i + 1, component, value[s] - value[t]});
      }
    }
  }
  return out;
}

std::string config_digest(const SystemConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "I=" << cfg.num_sources << ";N=" << (cfg.bounded() ? std::to_string(cfg.bound()) : "inf")
     << ";p1=" << cfg.p1 << ";p2=" << cfg.p2 << ";gamma=" << cfg.gamma_max << ";mu=";
  for (double v : cfg.arrival_rates) os << v << ',';
  os << ";w=";
  for (double v : cfg.weights) os << v << ',';
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_policy(std::ostream& os, const PolicyTable& policy, const std::string& digest) {
  const auto old_precision = os.precision(17);
  os << "#config-digest=" << digest << '\n';
  os << "#lambda=" << policy.lambda << '\n';
  os << "#bellman-residual=" << policy.bellman_residual << '\n';
  for (std::size_t s = 0; s < policy.size(); ++s)
    os << s << ',' << policy[s].alpha << ',' << policy[s].beta << '\n';
  os.precision(old_precision);
}

PolicyTable read_policy(std::istream& is, const std::string& expected_digest,
                        std::size_t expected_states, int num_sources) {
  PolicyTable policy;
  policy.actions.assign(expected_states, Action{});
  std::vector<char> seen(expected_states, 0);
  std::string line;
  bool digest_seen = false;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(1, eq - 1);
      const std::string val = line.substr(eq + 1);
      if (key == "config-digest") {
        if (val != expected_digest)
          throw ConfigError("policy file digest " + val + " does not match configuration digest " +
                            expected_digest);
        digest_seen = true;
      } else if (key == "lambda") {
        policy.lambda = std::stod(val);
      } else if (key == "bellman-residual") {
        policy.bellman_residual = std::stod(val);
      }
      continue;
    }
    std::size_t s = 0;
    int alpha = 0, beta = 0;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> s >> c1 >> alpha >> c2 >> beta) || c1 != ',' || c2 != ',')
      throw ConfigError("malformed policy row: " + line);
    if (s >= expected_states) throw ConfigError("policy row state index out of range: " + line);
    const Action a{alpha, beta};
    if (!is_valid(a, num_sources)) throw ConfigError("policy row has an invalid action: " + line);
    policy.actions[s] = a;
    if (!seen[s]) ++rows;
    seen[s] = 1;
  }
  if (!digest_seen) throw ConfigError("policy file has no #config-digest header");
  if (rows != expected_states) throw ConfigError("policy file does not cover every state");
  return policy;
}

}  // namespace aoi

#include "aoi/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace aoi {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

long long to_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

// `source.3.mu` -> `source.*.mu`
std::string generic_key(const std::string& key) {
  if (key.rfind("source.", 0) != 0) return key;
  const auto dot = key.find('.', 7);
  if (dot == std::string::npos) return key;
  return "source.*" + key.substr(dot);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& is, const std::string& origin) {
  KeyValueConfig kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                        body + "'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.entries_.count(key))
      throw ConfigError(key + ": duplicate key (" + origin + ":" + std::to_string(lineno) + ")");
    kv.entries_[key] = value;
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : to_double(key, it->second);
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : to_int(key, it->second);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                std::vector<double> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key,
                                                     std::vector<std::string> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  auto out = split_list(it->second);
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

void KeyValueConfig::reject_unknown(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    const std::string g = generic_key(key);
    if (std::find(known.begin(), known.end(), g) == known.end())
      throw ConfigError(key + ": unknown key");
  }
}

SystemConfig system_from(const KeyValueConfig& kv) {
  SystemConfig cfg;
  const long long sources = kv.get_int("sources", 2);
  if (sources < 1 || sources > 64) throw ConfigError("sources: must lie in [1, 64]");
  cfg.num_sources = static_cast<int>(sources);
  const std::string bound = kv.get_string("bound", "none");
  if (bound != "none") {
    const long long n = to_int("bound", bound);
    if (n < 2 || n > 1000) throw ConfigError("bound: must be 'none' or lie in [2, 1000]");
    cfg.aoi_bound = static_cast<int>(n);
  }
  cfg.p1 = kv.get_double("p1", 1.0);
  cfg.p2 = kv.get_double("p2", 1.0);
  cfg.gamma_max = kv.get_double("gamma_max", 1.0);
  const double default_mu = kv.get_double("mu", 1.0);
  const double default_w = kv.get_double("w", 1.0);
  for (int i = 1; i <= cfg.num_sources; ++i) {
    const std::string prefix = "source." + std::to_string(i) + ".";
    const double mu = kv.get_double(prefix + "mu", default_mu);
    const double w = kv.get_double(prefix + "w", default_w);
    if (!(mu > 0.0 && mu <= 1.0))
      throw ConfigError((kv.has(prefix + "mu") ? prefix + "mu" : std::string("mu")) +
                        ": arrival rate must lie in (0, 1]");
    if (!(w > 0.0))
      throw ConfigError((kv.has(prefix + "w") ? prefix + "w" : std::string("w")) +
                        ": weight must be positive");
    cfg.arrival_rates.push_back(mu);
    cfg.weights.push_back(w);
  }
  if (!(cfg.p1 > 0.0 && cfg.p1 <= 1.0)) throw ConfigError("p1: must lie in (0, 1]");
  if (!(cfg.p2 > 0.0 && cfg.p2 <= 1.0)) throw ConfigError("p2: must lie in (0, 1]");
  if (!(cfg.gamma_max > 0.0 && cfg.gamma_max <= 2.0))
    throw ConfigError("gamma_max: must lie in (0, 2]");
  // Per-source keys beyond the declared count are almost certainly typos.
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind("source.", 0) != 0) continue;
    const auto dot = key.find('.', 7);
    const std::string idx = key.substr(7, dot == std::string::npos ? std::string::npos : dot - 7);
    const long long i = to_int(key, idx);
    if (i < 1 || i > cfg.num_sources)
      throw ConfigError(key + ": source index outside 1.." + std::to_string(cfg.num_sources));
  }
  cfg.validate();
  return cfg;
}

SolverConfig solver_from(const KeyValueConfig& kv) {
  SolverConfig s;
  s.zeta = kv.get_double("solver.zeta", s.zeta);
  s.epsilon = kv.get_double("solver.epsilon", s.epsilon);
  s.lambda_minus = kv.get_double("solver.lambda_minus", s.lambda_minus);
  s.lambda_plus = kv.get_double("solver.lambda_plus", s.lambda_plus);
  s.reference_state = static_cast<std::size_t>(
      kv.get_int("solver.reference_state", static_cast<long long>(s.reference_state)));
  s.max_sweeps = static_cast<int>(kv.get_int("solver.max_sweeps", s.max_sweeps));
  s.use_structure = kv.get_bool("solver.use_structure", s.use_structure);
  s.validate();
  return s;
}

DppConfig dpp_from(const KeyValueConfig& kv) {
  DppConfig d;
  d.tradeoff = kv.get_double("dpp.tradeoff", d.tradeoff);
  d.validate();
  return d;
}

DrlConfig drl_from(const KeyValueConfig& kv) {
  DrlConfig d;
  d.tradeoff = kv.get_double("drl.tradeoff", d.tradeoff);
  d.discount = kv.get_double("drl.discount", d.discount);
  if (kv.has("drl.hidden")) {
    d.hidden.clear();
    for (double h : kv.get_doubles("drl.hidden", {})) {
      if (h != static_cast<int>(h)) throw ConfigError("drl.hidden: sizes must be integers");
      d.hidden.push_back(static_cast<int>(h));
    }
  }
  d.learning_rate = kv.get_double("drl.learning_rate", d.learning_rate);
  d.batch_size = static_cast<int>(kv.get_int("drl.batch_size", d.batch_size));
  d.replay_capacity = static_cast<std::size_t>(
      kv.get_int("drl.replay_capacity", static_cast<long long>(d.replay_capacity)));
  d.min_replay =
      static_cast<std::size_t>(kv.get_int("drl.min_replay", static_cast<long long>(d.min_replay)));
  d.target_sync = static_cast<int>(kv.get_int("drl.target_sync", d.target_sync));
  d.eps_start = kv.get_double("drl.eps_start", d.eps_start);
  d.eps_end = kv.get_double("drl.eps_end", d.eps_end);
  d.eps_decay_fraction = kv.get_double("drl.eps_decay_fraction", d.eps_decay_fraction);
  d.steps_per_episode = static_cast<int>(kv.get_int("drl.steps_per_episode", d.steps_per_episode));
  d.episodes = static_cast<int>(kv.get_int("drl.episodes", d.episodes));
  d.state_scale = kv.get_double("drl.state_scale", d.state_scale);
  d.reward_scale = kv.get_double("drl.reward_scale", d.reward_scale);
  d.grad_clip = kv.get_double("drl.grad_clip", d.grad_clip);
  d.rmsprop_decay = kv.get_double("drl.rmsprop_decay", d.rmsprop_decay);
  d.rmsprop_epsilon = kv.get_double("drl.rmsprop_epsilon", d.rmsprop_epsilon);
  d.reset_each_episode = kv.get_bool("drl.reset_each_episode", d.reset_each_episode);
  d.validate();
  return d;
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "sources", "bound", "p1", "p2", "gamma_max", "mu", "w", "source.*.mu", "source.*.w",
      "solver.zeta", "solver.epsilon", "solver.lambda_minus", "solver.lambda_plus",
      "solver.reference_state", "solver.max_sweeps", "solver.use_structure",
      "dpp.tradeoff",
      "drl.tradeoff", "drl.discount", "drl.hidden", "drl.learning_rate", "drl.batch_size",
      "drl.replay_capacity", "drl.min_replay", "drl.target_sync", "drl.eps_start",
      "drl.eps_end", "drl.eps_decay_fraction", "drl.steps_per_episode", "drl.episodes",
      "drl.state_scale", "drl.reward_scale", "drl.grad_clip", "drl.rmsprop_decay",
      "drl.rmsprop_epsilon", "drl.reset_each_episode",
      "simulate.policy", "simulate.horizon", "simulate.lambda", "simulate.policy_file",
      "simulate.checkpoint", "simulate.series_every", "simulate.env_bound",
      "experiment.name", "experiment.sweep", "experiment.grid", "experiment.horizon",
      "experiment.replications", "experiment.seed", "experiment.policies",
      "experiment.solve_bound", "experiment.env_bound", "experiment.series_every",
      "experiment.threads", "experiment.checkpoint",
      "complexity.bounds", "complexity.sources", "complexity.sweeps",
      "validate.trials", "validate.pairs", "validate.z"};
  return keys;
}

}  // namespace aoi

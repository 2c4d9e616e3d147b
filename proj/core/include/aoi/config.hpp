#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aoi/dpp.hpp"
#include "aoi/drl.hpp"
#include "aoi/model.hpp"
#include "aoi/solver.hpp"

namespace aoi {

/// Flat `key = value` file. `#` starts a comment; dotted keys such as
/// `source.2.mu` address per-source fields. Lists are comma separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       std::vector<std::string> fallback) const;

  /// Throws ConfigError naming the first key outside `known` (per-source keys
  /// are matched as `source.*.field`).
  void reject_unknown(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> entries_;
};

/// Keys: sources, bound (integer or `none`), p1, p2, gamma_max, source.<i>.mu,
/// source.<i>.w.
SystemConfig system_from(const KeyValueConfig& kv);
/// Keys under `solver.`.
SolverConfig solver_from(const KeyValueConfig& kv);
/// `dpp.tradeoff`.
DppConfig dpp_from(const KeyValueConfig& kv);
/// Keys under `drl.`.
DrlConfig drl_from(const KeyValueConfig& kv);

/// Every key the readers above and the experiment reader understand.
const std::vector<std::string>& known_keys();

}  // namespace aoi

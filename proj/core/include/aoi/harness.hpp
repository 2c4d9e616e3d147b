#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aoi/baselines.hpp"
#include "aoi/config.hpp"
#include "aoi/dpp.hpp"
#include "aoi/drl.hpp"
#include "aoi/kernel.hpp"
#include "aoi/model.hpp"
#include "aoi/policy_table.hpp"
#include "aoi/random.hpp"
#include "aoi/solver.hpp"

namespace aoi {

/// Stationary table indexed over a bounded state space. States outside the
/// table's simplex are clamped before lookup.
struct TablePolicy {
  std::shared_ptr<const PolicyTable> table;
  StateIndexer indexer;
};

struct GreedyPolicy {
  double gamma_max = 1.0;
  BaselineState running;
};

struct RandomPolicy {
  int num_sources = 1;
};

struct IdlePolicy {};

/// Any scheduler the simulator can drive. Internal state (virtual queue,
/// running averages) lives inside the handle, so copy a fresh handle per run.
class PolicyHandle {
 public:
  static PolicyHandle table(std::shared_ptr<const PolicyTable> table, StateIndexer indexer,
                            std::string name = "table");
  static PolicyHandle dpp(const SystemConfig& cfg, const DppConfig& dpp, std::string name = "dpp");
  static PolicyHandle greedy(double gamma_max, std::string name = "greedy");
  static PolicyHandle random(int num_sources, std::string name = "random");
  static PolicyHandle drl(QNetwork net, const SystemConfig& cfg, double state_scale,
                          std::string name = "drl");
  static PolicyHandle idle(std::string name = "idle");

  /// Chooses the action for `s`; `rng` is the exploration stream.
  Action decide(const SystemState& s, RandomStream& rng);
  /// Updates internal state after `a` was applied.
  void observe(Action a);
  /// Virtual queue backlog, for queue-driven policies.
  std::optional<double> backlog() const;

  const std::string& name() const { return name_; }

 private:
  using Impl = std::variant<TablePolicy, DppPolicy, GreedyPolicy, RandomPolicy, DrlPolicy, IdlePolicy>;
  PolicyHandle(Impl impl, std::string name) : impl_(std::move(impl)), name_(std::move(name)) {}

  Impl impl_;
  std::string name_;
};

struct SeriesPoint {
  std::uint64_t slot = 0;
  double ws_aaoi_running = 0.0;
  double tx_running = 0.0;
  double backlog = 0.0;  // NaN when the policy has no queue
};

struct RunMetrics {
  std::uint64_t horizon = 0;
  double ws_aaoi = 0.0;       // Cesaro mean of sum_i w_i delta_i[t], t = 1..T
  double tx_rate = 0.0;       // Cesaro mean of D(a[t]), t = 0..T-1
  double ws_aaoi_tail = 0.0;  // same over the last 10% of slots
  double tx_tail = 0.0;
  double mean_backlog = 0.0;  // NaN when the policy has no queue
  double max_backlog = 0.0;
  std::vector<double> source_aaoi;  // unweighted delta_i averages
  std::vector<SeriesPoint> series;  // empty unless series_every > 0

  /// Long-run Lagrangian average, ws_aaoi + lambda (tx_rate - gamma_max).
  double lagrangian(double lambda, double gamma_max) const {
    return ws_aaoi + lambda * (tx_rate - gamma_max);
  }
};

/// Runs `horizon` slots from the all-zero state. The environment is bounded
/// exactly when `cfg` carries a bound. Deterministic in `seed`.
RunMetrics simulate(PolicyHandle policy, const SystemConfig& cfg, std::uint64_t horizon,
                    std::uint64_t seed, std::uint64_t series_every = 0);

void write_series(std::ostream& os, const RunMetrics& m);

struct Interval {
  double mean = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// Mean with a two-sided 95% Student-t interval. A single sample gives a
/// degenerate interval.
Interval confidence_interval(const std::vector<double>& samples);

enum class SweepVariable { GammaMax, ArrivalRate, SuccessProb, NumSources, Weight, Tradeoff };

SweepVariable parse_sweep_variable(const std::string& text);
std::string to_string(SweepVariable v);

struct ExperimentSpec {
  std::string name = "experiment";
  SweepVariable variable = SweepVariable::GammaMax;
  std::vector<double> grid;
  SystemConfig base;             // environment; unbounded unless env_bound is set
  std::optional<int> env_bound;  // bound of the simulated environment
  int solve_bound = 10;          // N used to solve table policies
  SolverConfig solver;
  DppConfig dpp;
  double drl_state_scale = 50.0;
  std::optional<std::string> drl_checkpoint;
  std::uint64_t horizon = 100000;
  int replications = 5;
  std::uint64_t seed_base = 1;
  std::vector<std::string> policies{"lambda_plus", "lambda_minus", "dpp", "greedy"};
  std::uint64_t series_every = 0;  // 0 disables time-series files
  int threads = 0;                 // 0 = hardware concurrency

  void validate() const;
};

/// Reads `experiment.*` keys on top of the system, solver and dpp keys.
ExperimentSpec experiment_from(const KeyValueConfig& kv);

/// The system configuration of one sweep cell.
SystemConfig apply_sweep(const ExperimentSpec& spec, double value);

struct CellResult {
  double sweep_value = 0.0;
  std::string policy;
  Interval ws_aaoi;
  Interval tx_rate;
  std::vector<Interval> source_aaoi;
  std::vector<RunMetrics> runs;  // one per replication, series included
  std::string error;             // nonempty when the cell failed
  bool ok() const { return error.empty(); }
};

struct ExperimentResult {
  std::vector<CellResult> cells;  // grid-major, then policy in spec order
};

/// Solves table policies once per grid value, then simulates every
/// (value, policy, replication) on a thread pool. Failures are recorded on
/// the cell and the sweep continues.
ExperimentResult run_experiment(const ExperimentSpec& spec);

/// `<name>.csv` (`sweep_value,policy,mean,ci_low,ci_high`), `<name>_tx.csv`,
/// `<name>_sources.csv`, `<name>_errors.csv` when any cell failed, and
/// per-cell time series when enabled.
void write_experiment(const std::string& out_dir, const ExperimentSpec& spec,
                      const ExperimentResult& result);

struct ComplexityPoint {
  int bound = 0;
  int num_sources = 0;
  std::size_t states = 0;
  int actions = 0;
  std::size_t max_branches = 0;
  std::size_t entries = 0;
  double build_seconds = 0.0;
  double sweep_seconds = 0.0;  // mean wall time of one full RVIA sweep
};

/// Builds the kernel at (bound, num_sources) with the remaining parameters
/// of `base` (per-source values cycled) and times `sweeps` unstructured sweeps.
ComplexityPoint measure_complexity(const SystemConfig& base, int bound, int num_sources,
                                   int sweeps);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace aoi

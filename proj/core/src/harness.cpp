#include "aoi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

namespace aoi {

PolicyHandle PolicyHandle::table(std::shared_ptr<const PolicyTable> table, StateIndexer indexer,
                                 std::string name) {
  if (!table || table->size() != indexer.size())
    throw std::invalid_argument("table policy does not cover its state space");
  return PolicyHandle(TablePolicy{std::move(table), std::move(indexer)}, std::move(name));
}

PolicyHandle PolicyHandle::dpp(const SystemConfig& cfg, const DppConfig& dpp, std::string name) {
  return PolicyHandle(DppPolicy(cfg, dpp), std::move(name));
}

PolicyHandle PolicyHandle::greedy(double gamma_max, std::string name) {
  return PolicyHandle(GreedyPolicy{gamma_max, {}}, std::move(name));
}

PolicyHandle PolicyHandle::random(int num_sources, std::string name) {
  return PolicyHandle(RandomPolicy{num_sources}, std::move(name));
}

PolicyHandle PolicyHandle::drl(QNetwork net, const SystemConfig& cfg, double state_scale,
                               std::string name) {
  return PolicyHandle(DrlPolicy(std::move(net), cfg, state_scale), std::move(name));
}

PolicyHandle PolicyHandle::idle(std::string name) { return PolicyHandle(IdlePolicy{}, std::move(name)); }

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool inside(const SystemState& s, int bound) {
  for (const auto& src : s.sources)
    if (src.theta + src.x + src.y > bound) return false;
  return true;
}

}  // namespace

Action PolicyHandle::decide(const SystemState& s, RandomStream& rng) {
  return std::visit(
      overloaded{
          [&](TablePolicy& p) {
            const int n = p.indexer.bound();
            const std::size_t idx =
                inside(s, n) ? p.indexer.encode(s) : p.indexer.encode(clamp_to_bound(s, n));
            return (*p.table)[idx];
          },
          [&](DppPolicy& p) { return p.decide(s); },
          [&](GreedyPolicy& p) { return greedy_decide(s, p.running, p.gamma_max); },
          [&](RandomPolicy& p) { return random_decide(rng, p.num_sources); },
          [&](DrlPolicy& p) { return p.decide(s); },
          [&](IdlePolicy&) { return Action{}; },
      },
      impl_);
}

void PolicyHandle::observe(Action a) {
  std::visit(overloaded{
                 [&](DppPolicy& p) { p.observe(a); },
                 [&](DrlPolicy& p) { p.observe(a); },
                 [](auto&) {},
             },
             impl_);
}

std::optional<double> PolicyHandle::backlog() const {
  return std::visit(overloaded{
                        [](const DppPolicy& p) -> std::optional<double> { return p.backlog(); },
                        [](const DrlPolicy& p) -> std::optional<double> { return p.backlog(); },
                        [](const auto&) -> std::optional<double> { return std::nullopt; },
                    },
                    impl_);
}

RunMetrics simulate(PolicyHandle policy, const SystemConfig& cfg, std::uint64_t horizon,
                    std::uint64_t seed, std::uint64_t series_every) {
  cfg.validate();
  if (horizon == 0) throw std::invalid_argument("simulate: zero horizon");
  RandomStreams streams(seed);
  SystemState s = SystemState::zeros(cfg.num_sources);
  const std::uint64_t tail_start = horizon - std::max<std::uint64_t>(1, horizon / 10);
  const bool queued = policy.backlog().has_value();
  const auto n = static_cast<std::size_t>(cfg.num_sources);

  RunMetrics m;
  m.horizon = horizon;
  m.source_aaoi.assign(n, 0.0);
  double cost_sum = 0.0;
  double tx_sum = 0.0;
  double cost_tail = 0.0;
  double tx_tail = 0.0;
  double backlog_sum = 0.0;
  for (std::uint64_t t = 0; t < horizon; ++t) {
    const Action a = policy.decide(s, streams.exploration);
    const StepOutcome out = step(s, a, cfg, streams);
    policy.observe(a);
    s = out.next_state;

    const double cost = aoi_cost(s, cfg);
    cost_sum += cost;
    tx_sum += out.tx_cost;
    for (std::size_t i = 0; i < n; ++i) m.source_aaoi[i] += s.sources[i].dest_aoi();
    if (t >= tail_start) {
      cost_tail += cost;
      tx_tail += out.tx_cost;
    }
    double h = std::numeric_limits<double>::quiet_NaN();
    if (queued) {
      h = *policy.backlog();
      backlog_sum += h;
      m.max_backlog = std::max(m.max_backlog, h);
    }
    if (series_every > 0 && ((t + 1) % series_every == 0 || t + 1 == horizon)) {
      const double slots = static_cast<double>(t + 1);
      m.series.push_back(SeriesPoint{t + 1, cost_sum / slots, tx_sum / slots, h});
    }
  }
  const double T = static_cast<double>(horizon);
  const double tail = static_cast<double>(horizon - tail_start);
  m.ws_aaoi = cost_sum / T;
  m.tx_rate = tx_sum / T;
  m.ws_aaoi_tail = cost_tail / tail;
  m.tx_tail = tx_tail / tail;
  m.mean_backlog = queued ? backlog_sum / T : std::numeric_limits<double>::quiet_NaN();
  for (auto& v : m.source_aaoi) v /= T;
  return m;
}

void write_series(std::ostream& os, const RunMetrics& m) {
  os << "slot,ws_aaoi_running,tx_running,backlog\n" << std::setprecision(10);
  for (const auto& p : m.series) {
    os << p.slot << ',' << p.ws_aaoi_running << ',' << p.tx_running << ',';
    if (!std::isnan(p.backlog)) os << p.backlog;
    os << '\n';
  }
}

Interval confidence_interval(const std::vector<double>& samples) {
  if (samples.empty()) throw std::invalid_argument("confidence_interval: no samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  if (samples.size() == 1) return {mean, mean, mean};
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  boost::math::students_t dist(n - 1.0);
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  const double half = q * sd / std::sqrt(n);
  return {mean, mean - half, mean + half};
}

SweepVariable parse_sweep_variable(const std::string& text) {
  if (text == "gamma_max") return SweepVariable::GammaMax;
  if (text == "mu") return SweepVariable::ArrivalRate;
  if (text == "p") return SweepVariable::SuccessProb;
  if (text == "sources") return SweepVariable::NumSources;
  if (text == "weight") return SweepVariable::Weight;
  if (text == "tradeoff") return SweepVariable::Tradeoff;
  throw ConfigError("experiment.sweep: unknown sweep variable '" + text +
                    "' (gamma_max, mu, p, sources, weight, tradeoff)");
}

std::string to_string(SweepVariable v) {
  switch (v) {
    case SweepVariable::GammaMax: return "gamma_max";
    case SweepVariable::ArrivalRate: return "mu";
    case SweepVariable::SuccessProb: return "p";
    case SweepVariable::NumSources: return "sources";
    case SweepVariable::Weight: return "weight";
    case SweepVariable::Tradeoff: return "tradeoff";
  }
  return "?";
}

namespace {

const std::vector<std::string> kPolicies = {"lambda_plus", "lambda_minus", "dpp", "greedy",
                                            "random", "drl", "idle"};

bool needs_table(const std::string& p) { return p == "lambda_plus" || p == "lambda_minus"; }

}  // namespace

void ExperimentSpec::validate() const {
  base.validate();
  solver.validate();
  dpp.validate();
  if (grid.empty()) throw ConfigError("experiment.grid: must be nonempty");
  if (horizon == 0) throw ConfigError("experiment.horizon: must be positive");
  if (replications < 1) throw ConfigError("experiment.replications: must be at least 1");
  if (solve_bound < 1) throw ConfigError("experiment.solve_bound: must be positive");
  if (policies.empty()) throw ConfigError("experiment.policies: must be nonempty");
  for (const auto& p : policies)
    if (std::find(kPolicies.begin(), kPolicies.end(), p) == kPolicies.end())
      throw ConfigError("experiment.policies: unknown policy '" + p + "'");
  if (variable == SweepVariable::Weight && base.num_sources != 2)
    throw ConfigError("experiment.sweep: weight sweeps need exactly 2 sources");
  for (double v : grid) (void)apply_sweep(*this, v);
  if (std::find(policies.begin(), policies.end(), "drl") != policies.end() && !drl_checkpoint)
    throw ConfigError("experiment.checkpoint: required when policies include drl");
}

ExperimentSpec experiment_from(const KeyValueConfig& kv) {
  ExperimentSpec spec;
  spec.base = system_from(kv);
  spec.solver = solver_from(kv);
  spec.dpp = dpp_from(kv);
  spec.name = kv.get_string("experiment.name", spec.name);
  spec.variable = parse_sweep_variable(kv.get_string("experiment.sweep", "gamma_max"));
  spec.grid = kv.get_doubles("experiment.grid", {});
  spec.horizon = static_cast<std::uint64_t>(
      kv.get_int("experiment.horizon", static_cast<long long>(spec.horizon)));
  spec.replications = static_cast<int>(kv.get_int("experiment.replications", spec.replications));
  spec.seed_base =
      static_cast<std::uint64_t>(kv.get_int("experiment.seed", static_cast<long long>(spec.seed_base)));
  spec.policies = kv.get_strings("experiment.policies", spec.policies);
  spec.solve_bound = static_cast<int>(kv.get_int("experiment.solve_bound", spec.solve_bound));
  const std::string env = kv.get_string("experiment.env_bound", "none");
  if (env != "none") spec.env_bound = static_cast<int>(kv.get_int("experiment.env_bound", 0));
  spec.series_every = static_cast<std::uint64_t>(kv.get_int("experiment.series_every", 0));
  spec.threads = static_cast<int>(kv.get_int("experiment.threads", 0));
  if (kv.has("experiment.checkpoint")) spec.drl_checkpoint = kv.get_string("experiment.checkpoint", "");
  spec.drl_state_scale = kv.get_double("drl.state_scale", spec.drl_state_scale);
  spec.base.aoi_bound.reset();
  spec.validate();
  return spec;
}

SystemConfig apply_sweep(const ExperimentSpec& spec, double value) {
  SystemConfig cfg = spec.base;
  switch (spec.variable) {
    case SweepVariable::GammaMax:
      cfg.gamma_max = value;
      break;
    case SweepVariable::ArrivalRate:
      std::fill(cfg.arrival_rates.begin(), cfg.arrival_rates.end(), value);
      break;
    case SweepVariable::SuccessProb:
      cfg.p1 = value;
      cfg.p2 = value;
      break;
    case SweepVariable::NumSources: {
      if (value < 1 || value != std::floor(value))
        throw ConfigError("experiment.grid: source counts must be positive integers");
      const auto n = static_cast<std::size_t>(value);
      std::vector<double> mu(n);
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) {
        mu[i] = spec.base.arrival_rates[i % spec.base.arrival_rates.size()];
        w[i] = spec.base.weights[i % spec.base.weights.size()];
      }
      cfg.num_sources = static_cast<int>(n);
      cfg.arrival_rates = mu;
      cfg.weights = w;
      break;
    }
    case SweepVariable::Weight:
      cfg.weights = {value, 1.0 - value};
      break;
    case SweepVariable::Tradeoff:
      if (value < 0) throw ConfigError("experiment.grid: tradeoff values must be nonnegative");
      break;
  }
  cfg.aoi_bound = spec.env_bound;
  cfg.validate();
  return cfg;
}

namespace {

struct CellPlan {
  double value;
  SystemConfig env;
  DppConfig dpp;
  std::shared_ptr<const PolicyTable> plus;
  std::shared_ptr<const PolicyTable> minus;
  std::optional<StateIndexer> indexer;
  std::string solve_error;
};

template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads)
                                 : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

// Guard against table solves that would not fit in memory.
constexpr std::size_t kMaxTableStates = 2'000'000;

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const bool want_tables = std::any_of(spec.policies.begin(), spec.policies.end(), needs_table);
  std::optional<QNetwork> net;
  std::string net_error;
  if (spec.drl_checkpoint) {
    try {
      std::ifstream in(*spec.drl_checkpoint);
      if (!in) throw std::runtime_error("cannot open checkpoint " + *spec.drl_checkpoint);
      net = load_checkpoint(in, "");
    } catch (const std::exception& e) {
      net_error = e.what();
    }
  }

  std::vector<CellPlan> plans(spec.grid.size());
  parallel_for(plans.size(), spec.threads, [&](std::size_t c) {
    CellPlan& plan = plans[c];
    plan.value = spec.grid[c];
    plan.env = apply_sweep(spec, plan.value);
    plan.dpp = spec.dpp;
    if (spec.variable == SweepVariable::Tradeoff) plan.dpp.tradeoff = plan.value;
    if (!want_tables) return;
    try {
      SystemConfig solve_cfg = plan.env;
      solve_cfg.aoi_bound = spec.solve_bound;
      const std::size_t states =
          static_cast<std::size_t>(std::pow(static_cast<double>(StateIndexer::simplex_count(spec.solve_bound)),
                                            solve_cfg.num_sources));
      if (states > kMaxTableStates)
        throw std::runtime_error("table state space too large (" + std::to_string(states) + " states)");
      const TransitionKernel kernel = build_kernel(solve_cfg);
      const LagrangianMdp mdp(kernel, solve_cfg);
      BisectionResult res = bisect(mdp, spec.solver);
      plan.indexer = enumerate(solve_cfg);
      plan.plus = std::make_shared<PolicyTable>(std::move(res.plus.policy));
      plan.minus = std::make_shared<PolicyTable>(std::move(res.minus.policy));
    } catch (const std::exception& e) {
      plan.solve_error = e.what();
    }
  });

  ExperimentResult result;
  const std::size_t np = spec.policies.size();
  result.cells.resize(plans.size() * np);
  for (std::size_t c = 0; c < plans.size(); ++c)
    for (std::size_t p = 0; p < np; ++p) {
      auto& cell = result.cells[c * np + p];
      cell.sweep_value = plans[c].value;
      cell.policy = spec.policies[p];
      cell.runs.resize(static_cast<std::size_t>(spec.replications));
      if (needs_table(cell.policy)) cell.error = plans[c].solve_error;
      if (cell.policy == "drl") cell.error = net_error;
    }

  std::mutex error_mutex;
  const std::size_t reps = static_cast<std::size_t>(spec.replications);
  parallel_for(result.cells.size() * reps, spec.threads, [&](std::size_t job) {
    const std::size_t cell_index = job / reps;
    const std::size_t r = job % reps;
    CellResult& cell = result.cells[cell_index];
    if (!cell.ok()) return;
    const CellPlan& plan = plans[cell_index / np];
    try {
      const std::string& name = cell.policy;
      std::optional<PolicyHandle> handle;
      if (name == "lambda_plus") handle = PolicyHandle::table(plan.plus, *plan.indexer, name);
      else if (name == "lambda_minus") handle = PolicyHandle::table(plan.minus, *plan.indexer, name);
      else if (name == "dpp") handle = PolicyHandle::dpp(plan.env, plan.dpp, name);
      else if (name == "greedy") handle = PolicyHandle::greedy(plan.env.gamma_max, name);
      else if (name == "random") handle = PolicyHandle::random(plan.env.num_sources, name);
      else if (name == "idle") handle = PolicyHandle::idle(name);
      else if (name == "drl") handle = PolicyHandle::drl(*net, plan.env, spec.drl_state_scale, name);
      cell.runs[r] = simulate(std::move(*handle), plan.env, spec.horizon, spec.seed_base + r,
                              r == 0 ? spec.series_every : 0);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (cell.error.empty()) cell.error = e.what();
    }
  });

  for (auto& cell : result.cells) {
    if (!cell.ok()) continue;
    std::vector<double> ws;
    std::vector<double> tx;
    for (const auto& run : cell.runs) {
      ws.push_back(run.ws_aaoi);
      tx.push_back(run.tx_rate);
    }
    cell.ws_aaoi = confidence_interval(ws);
    cell.tx_rate = confidence_interval(tx);
    const std::size_t n = cell.runs.front().source_aaoi.size();
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v;
      for (const auto& run : cell.runs) v.push_back(run.source_aaoi[i]);
      cell.source_aaoi.push_back(confidence_interval(v));
    }
  }
  return result;
}

namespace {

std::string format_value(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void write_interval(std::ostream& os, const Interval& iv) {
  os << iv.mean << ',' << iv.low << ',' << iv.high;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(10);
  return out;
}

}  // namespace

void write_experiment(const std::string& out_dir, const ExperimentSpec& spec,
                      const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  fs::create_directories(dir);

  auto main_csv = open_out(dir / (spec.name + ".csv"));
  auto tx_csv = open_out(dir / (spec.name + "_tx.csv"));
  auto src_csv = open_out(dir / (spec.name + "_sources.csv"));
  main_csv << "sweep_value,policy,mean,ci_low,ci_high\n";
  tx_csv << "sweep_value,policy,mean,ci_low,ci_high\n";
  src_csv << "sweep_value,policy,source,mean,ci_low,ci_high\n";
  std::vector<const CellResult*> failed;
  for (const auto& cell : result.cells) {
    if (!cell.ok()) {
      failed.push_back(&cell);
      continue;
    }
    const std::string key = format_value(cell.sweep_value) + ',' + cell.policy + ',';
    main_csv << key;
    write_interval(main_csv, cell.ws_aaoi);
    main_csv << '\n';
    tx_csv << key;
    write_interval(tx_csv, cell.tx_rate);
    tx_csv << '\n';
    for (std::size_t i = 0; i < cell.source_aaoi.size(); ++i) {
      src_csv << key << (i + 1) << ',';
      write_interval(src_csv, cell.source_aaoi[i]);
      src_csv << '\n';
    }
    if (spec.series_every > 0 && !cell.runs.empty() && !cell.runs.front().series.empty()) {
      auto series = open_out(dir / (spec.name + "_series_" + format_value(cell.sweep_value) + "_" +
                                    cell.policy + ".csv"));
      write_series(series, cell.runs.front());
    }
  }
  if (!failed.empty()) {
    auto err = open_out(dir / (spec.name + "_errors.csv"));
    err << "sweep_value,policy,message\n";
    for (const auto* cell : failed) {
      std::string msg = cell->error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      err << format_value(cell->sweep_value) << ',' << cell->policy << ',' << msg << '\n';
    }
  }
}

ComplexityPoint measure_complexity(const SystemConfig& base, int bound, int num_sources,
                                   int sweeps) {
  if (sweeps < 1) throw std::invalid_argument("measure_complexity: sweeps must be positive");
  SystemConfig cfg = base;
  cfg.num_sources = num_sources;
  cfg.aoi_bound = bound;
  cfg.arrival_rates.resize(static_cast<std::size_t>(num_sources));
  cfg.weights.resize(static_cast<std::size_t>(num_sources));
  for (std::size_t i = 0; i < cfg.arrival_rates.size(); ++i) {
    cfg.arrival_rates[i] = base.arrival_rates[i % base.arrival_rates.size()];
    cfg.weights[i] = base.weights[i % base.weights.size()];
  }
  cfg.validate();

  using clock = std::chrono::steady_clock;
  ComplexityPoint pt;
  pt.bound = bound;
  pt.num_sources = num_sources;
  const auto t0 = clock::now();
  const TransitionKernel kernel = build_kernel(cfg);
  pt.build_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  pt.states = kernel.num_states();
  pt.actions = kernel.num_actions();
  pt.max_branches = kernel.max_branches();
  pt.entries = kernel.num_entries();

  const LagrangianMdp mdp(kernel, cfg);
  RviaWorkspace ws = RviaWorkspace::initial(pt.states);
  PolicyTable policy;
  rvia_sweep(ws, mdp, 1.0, false, 0, policy);  // warm caches
  const auto t1 = clock::now();
  for (int k = 0; k < sweeps; ++k) rvia_sweep(ws, mdp, 1.0, false, 0, policy);
  pt.sweep_seconds = std::chrono::duration<double>(clock::now() - t1).count() / sweeps;
  return pt;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope: need at least two paired points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace aoi

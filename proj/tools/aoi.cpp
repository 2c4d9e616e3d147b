// aoi: command-line front end for the two-hop AoI scheduling toolkit.

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aoi/config.hpp"
#include "aoi/harness.hpp"
#include "aoi/kernel.hpp"
#include "aoi/solver.hpp"

namespace fs = std::filesystem;
using namespace aoi;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = ".";
};

KeyValueConfig load_config(const Globals& g) {
  KeyValueConfig kv;
  if (!g.config.empty()) kv = KeyValueConfig::load(g.config);
  kv.reject_unknown(known_keys());
  return kv;
}

std::ofstream open_out(const Globals& g, const std::string& file) {
  fs::create_directories(g.out);
  const fs::path path = fs::path(g.out) / file;
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(12);
  return os;
}

SystemConfig bounded_system(const KeyValueConfig& kv, const char* command) {
  SystemConfig cfg = system_from(kv);
  if (!cfg.bounded())
    throw ConfigError(std::string("bound: ") + command + " needs a finite AoI bound");
  return cfg;
}

int cmd_validate_kernel(const Globals& g) {
  const KeyValueConfig kv = load_config(g);
  const SystemConfig cfg = bounded_system(kv, "validate-kernel");
  const TransitionKernel kernel = build_kernel(cfg);
  std::cout << "states " << kernel.num_states() << ", actions " << kernel.num_actions()
            << ", entries " << kernel.num_entries() << "\n";

  int failures = 0;
  double worst = 0.0;
  for (std::size_t s = 0; s < kernel.num_states(); ++s)
    for (int a = 0; a < kernel.num_actions(); ++a) {
      double sum = 0.0;
      for (const auto& e : kernel.successors(s, a)) sum += e.probability;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  std::cout << "max row-sum error " << worst << "\n";
  if (worst > 1e-12) ++failures;

  McOptions mc;
  mc.trials_per_pair = static_cast<int>(kv.get_int("validate.trials", mc.trials_per_pair));
  mc.max_pairs = static_cast<std::size_t>(kv.get_int("validate.pairs", 2000));
  mc.z_threshold = kv.get_double("validate.z", mc.z_threshold);
  const McReport report = monte_carlo_validate(kernel, cfg, mc, g.seed);
  std::cout << "monte carlo: " << report.pairs_checked << " pairs, " << report.violations.size()
            << " violations\n";
  for (std::size_t k = 0; k < std::min<std::size_t>(report.violations.size(), 20); ++k) {
    const auto& v = report.violations[k];
    std::cout << "  state " << v.state << " action (" << v.action.alpha << ',' << v.action.beta << ") next " << v.next
              << " expected " << v.expected << " observed " << v.observed << "\n";
  }
  if (!report.violations.empty()) ++failures;

  // Unichain spot check on the all-idle and all-busy policies.
  for (int a : {0, kernel.num_actions() - 1}) {
    PolicyTable policy;
    policy.actions.assign(kernel.num_states(), decode_action(a, cfg.num_sources));
    const ReachabilityReport r = check_unichain(kernel, policy, cfg);
    std::cout << "unichain (constant action " << a << "): "
              << (r.accessible_from_all ? "ok" : "FAILED") << "\n";
    if (!r.accessible_from_all) ++failures;
  }
  {
    auto os = open_out(g, "kernel.csv");
    write_kernel_text(os, kernel);
  }
  std::cout << (failures == 0 ? "kernel ok" : "kernel has violations") << "\n";
  return failures == 0 ? 0 : 1;
}

void write_policy_file(const Globals& g, const std::string& file, const PolicyTable& policy,
                       const std::string& digest) {
  auto os = open_out(g, file);
  write_policy(os, policy, digest);
}

int cmd_solve(const Globals& g) {
  const KeyValueConfig kv = load_config(g);
  const SystemConfig cfg = bounded_system(kv, "solve");
  const SolverConfig solver = solver_from(kv);
  const TransitionKernel kernel = build_kernel(cfg);
  const LagrangianMdp mdp(kernel, cfg);
  const BisectionResult res = bisect(mdp, solver);
  const std::string digest = config_digest(cfg);

  write_policy_file(g, "policy_lambda_plus.csv", res.plus.policy, digest);
  write_policy_file(g, "policy_lambda_minus.csv", res.minus.policy, digest);
  {
    auto os = open_out(g, "solve_metrics.csv");
    os << "policy,lambda,ws_aaoi,avg_tx,gain,sweeps,bellman_residual,constraint_slack\n";
    os << "lambda_plus," << res.lambda_plus << ',' << res.plus_metrics.ws_aaoi << ','
       << res.plus_metrics.avg_tx << ',' << res.plus.gain << ',' << res.plus.sweeps << ','
       << res.plus.policy.bellman_residual << ',' << res.constraint_slack << '\n';
    os << "lambda_minus," << res.lambda_minus << ',' << res.minus_metrics.ws_aaoi << ','
       << res.minus_metrics.avg_tx << ',' << res.minus.gain << ',' << res.minus.sweeps << ','
       << res.minus.policy.bellman_residual << ',' << res.constraint_slack << '\n';
  }
  {
    auto os = open_out(g, "bisection_trace.csv");
    os << "step,lambda,ws_aaoi,avg_tx,sweeps,feasible\n";
    for (std::size_t k = 0; k < res.trace.size(); ++k) {
      const auto& t = res.trace[k];
      os << k << ',' << t.lambda << ',' << t.ws_aaoi << ',' << t.avg_tx << ',' << t.sweeps << ','
         << (t.feasible ? 1 : 0) << '\n';
    }
  }
  std::cout << std::setprecision(6) << "lambda+ = " << res.lambda_plus
            << "  J = " << res.plus_metrics.ws_aaoi << "  D = " << res.plus_metrics.avg_tx << "\n"
            << "lambda- = " << res.lambda_minus << "  J = " << res.minus_metrics.ws_aaoi
            << "  D = " << res.minus_metrics.avg_tx << "\n";
  if (res.constraint_slack) std::cout << "budget is slack at lambda = " << res.lambda_minus << "\n";
  return 0;
}

int cmd_structure(const Globals& g, const std::vector<double>& lambdas) {
  const KeyValueConfig kv = load_config(g);
  const SystemConfig cfg = bounded_system(kv, "structure");
  const SolverConfig solver = solver_from(kv);
  const TransitionKernel kernel = build_kernel(cfg);
  const LagrangianMdp mdp(kernel, cfg);
  const StateIndexer& indexer = kernel.indexer();
  int violations = 0;
  auto report = open_out(g, "structure_report.csv");
  report << "lambda,switching_violations,monotonicity_violations,alpha_switching_exceptions\n";
  for (double lambda : lambdas) {
    const MdpSolution sol = solve_mdp(mdp, lambda, solver);
    const auto sw = verify_switching(sol.policy, indexer);
    const auto mono = verify_value_monotonicity(sol.value, indexer);
    const auto alpha = alpha_switching_report(sol.policy, indexer);
    violations += static_cast<int>(sw.size() + mono.size());
    report << lambda << ',' << sw.size() << ',' << mono.size() << ',' << alpha.size() << '\n';
    std::cout << "lambda " << lambda << ": switching violations " << sw.size()
              << ", monotonicity violations " << mono.size() << ", alpha exceptions "
              << alpha.size() << "\n";

    std::ostringstream name;
    name << "structure_lambda_" << lambda << ".csv";
    auto os = open_out(g, name.str());
    os << "state_index";
    for (int i = 1; i <= cfg.num_sources; ++i) os << ",theta" << i << ",x" << i << ",y" << i;
    os << ",alpha,beta,value\n";
    for (std::size_t s = 0; s < indexer.size(); ++s) {
      const SystemState st = indexer.decode(s);
      os << s;
      for (const auto& src : st.sources) os << ',' << src.theta << ',' << src.x << ',' << src.y;
      os << ',' << sol.policy[s].alpha << ',' << sol.policy[s].beta << ',' << sol.value[s] << '\n';
    }
  }
  return violations == 0 ? 0 : 1;
}

PolicyHandle make_policy(const KeyValueConfig& kv, const Globals& g, const SystemConfig& env,
                         const std::string& kind) {
  if (kind == "dpp") return PolicyHandle::dpp(env, dpp_from(kv));
  if (kind == "greedy") return PolicyHandle::greedy(env.gamma_max);
  if (kind == "random") return PolicyHandle::random(env.num_sources);
  if (kind == "idle") return PolicyHandle::idle();
  if (kind == "table") {
    const SystemConfig table_cfg = bounded_system(kv, "a table policy");
    const std::string file = kv.get_string("simulate.policy_file", "");
    if (file.empty()) throw ConfigError("simulate.policy_file: required for table policies");
    std::ifstream in(file);
    if (!in) throw ConfigError("simulate.policy_file: cannot open " + file);
    StateIndexer indexer = enumerate(table_cfg);
    auto table = std::make_shared<PolicyTable>(
        read_policy(in, config_digest(table_cfg), indexer.size(), table_cfg.num_sources));
    return PolicyHandle::table(std::move(table), std::move(indexer));
  }
  if (kind == "drl") {
    const std::string file = kv.get_string("simulate.checkpoint", "");
    if (file.empty()) throw ConfigError("simulate.checkpoint: required for drl policies");
    std::ifstream in(file);
    if (!in) throw ConfigError("simulate.checkpoint: cannot open " + file);
    SystemConfig train_cfg = env;
    train_cfg.aoi_bound.reset();
    QNetwork net = load_checkpoint(in, config_digest(train_cfg));
    return PolicyHandle::drl(std::move(net), env, drl_from(kv).state_scale);
  }
  (void)g;
  throw ConfigError("simulate.policy: unknown policy '" + kind +
                    "' (table, dpp, greedy, random, idle, drl)");
}

int cmd_simulate(const Globals& g) {
  const KeyValueConfig kv = load_config(g);
  SystemConfig env = system_from(kv);
  const std::string env_bound = kv.get_string("simulate.env_bound", "none");
  if (env_bound == "none") env.aoi_bound.reset();
  else env.aoi_bound = static_cast<int>(kv.get_int("simulate.env_bound", 0));
  const std::string kind = kv.get_string("simulate.policy", "dpp");
  const auto horizon = static_cast<std::uint64_t>(kv.get_int("simulate.horizon", 100000));
  const auto every = static_cast<std::uint64_t>(kv.get_int("simulate.series_every", 100));
  PolicyHandle policy = make_policy(kv, g, env, kind);
  const RunMetrics m = simulate(std::move(policy), env, horizon, g.seed, every);

  auto os = open_out(g, "simulate_metrics.csv");
  os << "policy,horizon,seed,ws_aaoi,tx_rate,ws_aaoi_tail,tx_tail,mean_backlog,max_backlog\n";
  os << kind << ',' << horizon << ',' << g.seed << ',' << m.ws_aaoi << ',' << m.tx_rate << ','
     << m.ws_aaoi_tail << ',' << m.tx_tail << ',';
  if (!std::isnan(m.mean_backlog)) os << m.mean_backlog << ',' << m.max_backlog;
  else os << ',';
  os << '\n';
  auto series = open_out(g, "simulate_series.csv");
  write_series(series, m);
  std::cout << std::setprecision(6) << kind << ": WS-AAoI " << m.ws_aaoi << ", tx/slot "
            << m.tx_rate << "\n";
  return 0;
}

int cmd_train(const Globals& g) {
  const KeyValueConfig kv = load_config(g);
  SystemConfig cfg = system_from(kv);
  cfg.aoi_bound.reset();
  const DrlConfig drl = drl_from(kv);
  const TrainResult result = train_d3qn(cfg, drl, g.seed);
  {
    auto os = open_out(g, "training_log.csv");
    write_training_log(os, result.episodes);
  }
  {
    auto os = open_out(g, "qnet.ckpt");
    save_checkpoint(os, result.network, config_digest(cfg), drl);
  }
  const auto& last = result.episodes.back();
  std::cout << std::setprecision(6) << "episodes " << result.episodes.size()
            << ", last episode: reward " << last.episodic_reward << ", tx/slot " << last.mean_tx
            << ", WS-AAoI " << last.ws_aaoi << "\n";
  return 0;
}

int cmd_compare(const Globals& g) {
  const KeyValueConfig kv = load_config(g);
  ExperimentSpec spec = experiment_from(kv);
  if (kv.has("experiment.seed") == false) spec.seed_base = g.seed;
  const ExperimentResult result = run_experiment(spec);
  write_experiment(g.out, spec, result);
  int failed = 0;
  for (const auto& cell : result.cells) {
    if (!cell.ok()) {
      ++failed;
      std::cerr << "cell " << cell.sweep_value << "/" << cell.policy << " failed: " << cell.error
                << "\n";
    }
  }
  std::cout << "wrote " << (fs::path(g.out) / (spec.name + ".csv")).string() << " ("
            << result.cells.size() - failed << " cells, " << failed << " failed)\n";
  return failed == 0 ? 0 : 2;
}

int cmd_complexity(const Globals& g) {
  const KeyValueConfig kv = load_config(g);
  SystemConfig base = system_from(kv);
  const auto bounds = kv.get_doubles("complexity.bounds", {3, 4, 5, 6});
  const auto sources = kv.get_doubles("complexity.sources", {2});
  const int sweeps = static_cast<int>(kv.get_int("complexity.sweeps", 20));
  auto os = open_out(g, "complexity.csv");
  os << "bound,sources,states,actions,max_branches,entries,build_seconds,sweep_seconds\n";
  for (double I : sources) {
    std::vector<double> work;
    std::vector<double> times;
    for (double N : bounds) {
      const ComplexityPoint p =
          measure_complexity(base, static_cast<int>(N), static_cast<int>(I), sweeps);
      os << p.bound << ',' << p.num_sources << ',' << p.states << ',' << p.actions << ','
         << p.max_branches << ',' << p.entries << ',' << p.build_seconds << ','
         << p.sweep_seconds << '\n';
      work.push_back(static_cast<double>(p.states) * p.actions);
      times.push_back(p.sweep_seconds);
      std::cout << "N=" << p.bound << " I=" << p.num_sources << " |S|=" << p.states
                << " sweep " << p.sweep_seconds * 1e3 << " ms\n";
    }
    if (work.size() >= 2)
      std::cout << "I=" << I << ": log-log slope of sweep time vs |S||A| = "
                << loglog_slope(work, times) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scheduling toolkit for age of information in two-hop relaying systems"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Path to a key = value configuration file");
  app.add_option("--seed", g.seed, "Experiment seed");
  app.add_option("--out", g.out, "Output directory");

  auto* validate = app.add_subcommand("validate-kernel", "Check the transition kernel");
  auto* solve = app.add_subcommand("solve", "Bisection over lambda with relative value iteration");
  std::vector<double> lambdas{0.5, 1.25, 5.0};
  auto* structure =
      app.add_subcommand("structure", "Switching-structure and value-monotonicity reports");
  structure->add_option("--lambda", lambdas, "Lagrange multipliers to solve at");
  auto* sim = app.add_subcommand("simulate", "Simulate one policy");
  auto* train = app.add_subcommand("train", "Train the dueling double Q-network");
  auto* compare = app.add_subcommand("compare", "Run a parameter sweep experiment");
  auto* complexity = app.add_subcommand("complexity", "Time RVIA sweeps over N and I");
  for (auto* sub : {validate, solve, structure, sim, train, compare, complexity}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*validate) return cmd_validate_kernel(g);
    if (*solve) return cmd_solve(g);
    if (*structure) return cmd_structure(g, lambdas);
    if (*sim) return cmd_simulate(g);
    if (*train) return cmd_train(g);
    if (*compare) return cmd_compare(g);
    if (*complexity) return cmd_complexity(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

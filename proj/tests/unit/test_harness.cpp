#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aoi/harness.hpp"
#include "doctest.h"

using namespace aoi;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("aoi_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("all-idle run: destination AoI grows linearly") {
  const auto cfg = SystemConfig::make({0.5, 0.7}, 0.6, 0.6, 1.0, std::nullopt);
  const std::uint64_t T = 5000;
  const RunMetrics m = simulate(PolicyHandle::idle(), cfg, T, 1, 1000);
  // delta_i[t] = t for both sources, so the Cesaro mean of the sum is T + 1.
  CHECK(m.ws_aaoi == doctest::Approx(static_cast<double>(T + 1)));
  CHECK(m.tx_rate == 0.0);
  REQUIRE(m.series.size() == 5);
  for (std::size_t k = 1; k < m.series.size(); ++k) {
    const double t = static_cast<double>(m.series[k].slot);
    CHECK(m.series[k].ws_aaoi_running == doctest::Approx(t + 1));
  }
  CHECK(std::isnan(m.mean_backlog));
}

TEST_CASE("identical seeds give identical metrics") {
  const auto cfg = SystemConfig::make({0.5, 0.7}, 0.6, 0.6, 1.0, std::nullopt);
  for (auto make : {+[](const SystemConfig& c) { return PolicyHandle::dpp(c, DppConfig{10}); },
                    +[](const SystemConfig& c) { return PolicyHandle::greedy(c.gamma_max); },
                    +[](const SystemConfig& c) { return PolicyHandle::random(c.num_sources); }}) {
    const RunMetrics a = simulate(make(cfg), cfg, 20000, 77, 500);
    const RunMetrics b = simulate(make(cfg), cfg, 20000, 77, 500);
    std::ostringstream sa, sb;
    write_series(sa, a);
    write_series(sb, b);
    CHECK(a.ws_aaoi == b.ws_aaoi);
    CHECK(a.tx_rate == b.tx_rate);
    CHECK(sa.str() == sb.str());
    const RunMetrics c = simulate(make(cfg), cfg, 20000, 78, 500);
    CHECK(c.ws_aaoi != a.ws_aaoi);
  }
}

TEST_CASE("policies share the environment's randomness") {
  // Arrival draws depend only on the seed, so an idle run and a busy run see
  // the same transmitter AoI trajectory.
  const auto cfg = SystemConfig::make({0.3}, 0.6, 0.6, 2.0, std::nullopt);
  RandomStreams a(5), b(5);
  SystemState sa = SystemState::zeros(1), sb = SystemState::zeros(1);
  for (int t = 0; t < 1000; ++t) {
    sa = step(sa, Action{0, 0}, cfg, a).next_state;
    sb = step(sb, Action{1, 1}, cfg, b).next_state;
    CHECK(sa.sources[0].theta == sb.sources[0].theta);
  }
}

TEST_CASE("table policy: simulation agrees with stationary evaluation") {
  const auto cfg = SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, 4);
  const TransitionKernel kernel = build_kernel(cfg);
  const LagrangianMdp mdp(kernel, cfg);
  const MdpSolution sol = solve_mdp(mdp, 1.25, SolverConfig{});
  const PolicyMetrics pm = evaluate_policy(mdp, sol.policy, SolverConfig{});
  auto table = std::make_shared<PolicyTable>(sol.policy);
  const RunMetrics run = simulate(PolicyHandle::table(table, kernel.indexer()), cfg, 400000, 3);
  CHECK(std::abs(run.ws_aaoi - pm.ws_aaoi) <= 0.01 * pm.ws_aaoi);
  CHECK(std::abs(run.tx_rate - pm.avg_tx) <= 0.02 * pm.avg_tx);

  // The same table runs in an unbounded environment by clamping.
  auto free_cfg = cfg;
  free_cfg.aoi_bound.reset();
  const RunMetrics loose = simulate(PolicyHandle::table(table, kernel.indexer()), free_cfg, 50000, 3);
  CHECK(loose.ws_aaoi >= run.ws_aaoi * 0.9);
  CHECK_THROWS(PolicyHandle::table(table, StateIndexer(3, 2)));
}

TEST_CASE("lambda-plus table at N=6: simulated transmission rate matches the stationary one") {
  const auto cfg = SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, 6);
  const TransitionKernel kernel = build_kernel(cfg);
  const LagrangianMdp mdp(kernel, cfg);
  SolverConfig solver;
  solver.zeta = 0.1;
  const BisectionResult b = bisect(mdp, solver);
  auto table = std::make_shared<PolicyTable>(b.plus.policy);
  const RunMetrics run = simulate(PolicyHandle::table(table, kernel.indexer()), cfg, 1000000, 9);
  CHECK(std::abs(run.tx_rate - b.plus_metrics.avg_tx) <= 0.01 * b.plus_metrics.avg_tx);
  CHECK(std::abs(run.ws_aaoi - b.plus_metrics.ws_aaoi) <= 0.01 * b.plus_metrics.ws_aaoi);
}

TEST_CASE("queue-driven handles expose their backlog") {
  const auto cfg = SystemConfig::make({0.5}, 0.5, 0.5, 1.0, std::nullopt);
  CHECK(PolicyHandle::dpp(cfg, DppConfig{}).backlog().has_value());
  CHECK_FALSE(PolicyHandle::greedy(1.0).backlog().has_value());
  CHECK_FALSE(PolicyHandle::idle().backlog().has_value());
  const RunMetrics m = simulate(PolicyHandle::dpp(cfg, DppConfig{1}), cfg, 1000, 1, 100);
  CHECK_FALSE(std::isnan(m.mean_backlog));
  CHECK(m.max_backlog >= m.mean_backlog);
}

TEST_CASE("tail window mean") {
  const auto cfg = SystemConfig::make({0.5}, 0.5, 0.5, 1.0, std::nullopt);
  const RunMetrics m = simulate(PolicyHandle::idle(), cfg, 1000, 1);
  // Last 100 slots of delta[t] = t, t = 901..1000.
  CHECK(m.ws_aaoi_tail == doctest::Approx(950.5));
}

TEST_CASE("student-t confidence interval") {
  const Interval iv = confidence_interval({1, 2, 3, 4, 5});
  CHECK(iv.mean == 3.0);
  const double half = 2.7764451051977987 * std::sqrt(2.5) / std::sqrt(5.0);
  CHECK(iv.high - iv.mean == doctest::Approx(half).epsilon(1e-9));
  CHECK(iv.mean - iv.low == doctest::Approx(half).epsilon(1e-9));
  const Interval one = confidence_interval({4.0});
  CHECK(one.low == 4.0);
  CHECK(one.high == 4.0);
  CHECK_THROWS(confidence_interval({}));
}

TEST_CASE("sweep application") {
  ExperimentSpec spec;
  spec.base = SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, std::nullopt, {1.0, 2.0});
  spec.grid = {1.0};
  spec.variable = SweepVariable::GammaMax;
  CHECK(apply_sweep(spec, 0.4).gamma_max == 0.4);
  spec.variable = SweepVariable::ArrivalRate;
  CHECK(apply_sweep(spec, 0.9).arrival_rates == std::vector<double>{0.9, 0.9});
  spec.variable = SweepVariable::SuccessProb;
  CHECK(apply_sweep(spec, 0.3).p1 == 0.3);
  CHECK(apply_sweep(spec, 0.3).p2 == 0.3);
  spec.variable = SweepVariable::NumSources;
  const auto four = apply_sweep(spec, 4);
  CHECK(four.num_sources == 4);
  CHECK(four.arrival_rates == std::vector<double>{0.5, 0.6, 0.5, 0.6});
  CHECK(four.weights == std::vector<double>{1.0, 2.0, 1.0, 2.0});
  CHECK_THROWS(apply_sweep(spec, 2.5));
  spec.variable = SweepVariable::Weight;
  CHECK(apply_sweep(spec, 0.25).weights == std::vector<double>{0.25, 0.75});
  spec.env_bound = 8;
  CHECK(apply_sweep(spec, 0.25).bound() == 8);
  CHECK(parse_sweep_variable(to_string(SweepVariable::Tradeoff)) == SweepVariable::Tradeoff);
}

TEST_CASE("experiment runs, writes the CSV schema and is reproducible") {
  ExperimentSpec spec;
  spec.name = "mini";
  spec.base = SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, std::nullopt);
  spec.variable = SweepVariable::GammaMax;
  spec.grid = {0.6, 1.4};
  spec.solve_bound = 3;
  spec.horizon = 3000;
  spec.replications = 3;
  spec.series_every = 500;
  spec.policies = {"lambda_plus", "dpp", "greedy", "drl"};
  spec.drl_checkpoint = "/nonexistent/qnet.ckpt";

  const ExperimentResult r = run_experiment(spec);
  REQUIRE(r.cells.size() == 8);
  int failed = 0;
  for (const auto& cell : r.cells) {
    if (cell.policy == "drl") {
      CHECK_FALSE(cell.ok());
      ++failed;
      continue;
    }
    REQUIRE(cell.ok());
    CHECK(cell.runs.size() == 3);
    CHECK(cell.ws_aaoi.low <= cell.ws_aaoi.mean);
    CHECK(cell.ws_aaoi.mean <= cell.ws_aaoi.high);
    CHECK(cell.source_aaoi.size() == 2);
  }
  CHECK(failed == 2);

  const fs::path d1 = scratch_dir("exp1");
  const fs::path d2 = scratch_dir("exp2");
  write_experiment(d1.string(), spec, r);
  write_experiment(d2.string(), spec, run_experiment(spec));
  const std::string main = slurp(d1 / "mini.csv");
  CHECK(main.rfind("sweep_value,policy,mean,ci_low,ci_high\n", 0) == 0);
  std::size_t lines = 0;
  for (char c : main) lines += c == '\n';
  CHECK(lines == 1 + 6);
  CHECK(slurp(d1 / "mini_sources.csv").rfind("sweep_value,policy,source,mean,ci_low,ci_high\n", 0) == 0);
  CHECK(slurp(d1 / "mini_errors.csv").find("drl") != std::string::npos);
  CHECK(fs::exists(d1 / "mini_series_0.6_dpp.csv"));
  for (const auto& entry : fs::directory_iterator(d1))
    CHECK(slurp(entry.path()) == slurp(d2 / entry.path().filename()));
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("log-log slope") {
  std::vector<double> x{10, 100, 1000, 10000}, y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 1.2));
  CHECK(loglog_slope(x, y) == doctest::Approx(1.2));
  CHECK_THROWS(loglog_slope({1.0}, {1.0}));
}

TEST_CASE("complexity measurement") {
  const auto base = SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, std::nullopt);
  const ComplexityPoint p = measure_complexity(base, 3, 2, 2);
  CHECK(p.states == 400);
  CHECK(p.actions == 9);
  CHECK(p.sweep_seconds > 0.0);
  CHECK(p.entries > p.states * p.actions);
}

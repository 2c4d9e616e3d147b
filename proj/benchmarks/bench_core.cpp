#include <benchmark/benchmark.h>

#include "aoi/dpp.hpp"
#include "aoi/drl.hpp"
#include "aoi/kernel.hpp"
#include "aoi/solver.hpp"

using namespace aoi;

namespace {

SystemConfig two_source(int bound) {
  return SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, bound);
}

void BM_BuildKernel(benchmark::State& state) {
  const auto cfg = two_source(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_kernel(cfg));
  state.counters["states"] = static_cast<double>(StateIndexer(cfg.bound(), 2).size());
}
BENCHMARK(BM_BuildKernel)->DenseRange(4, 10, 2)->Unit(benchmark::kMillisecond);

void BM_RviaSweep(benchmark::State& state) {
  const auto cfg = two_source(static_cast<int>(state.range(0)));
  const TransitionKernel kernel = build_kernel(cfg);
  const LagrangianMdp mdp(kernel, cfg);
  auto ws = RviaWorkspace::initial(kernel.num_states());
  PolicyTable policy;
  const bool structured = state.range(1) != 0;
  for (auto _ : state) rvia_sweep(ws, mdp, 1.25, structured, 0, policy);
  state.counters["entries"] = static_cast<double>(kernel.num_entries());
}
BENCHMARK(BM_RviaSweep)
    ->ArgsProduct({{4, 6, 8, 10}, {0, 1}})
    ->ArgNames({"N", "structured"})
    ->Unit(benchmark::kMillisecond);

void BM_DppDecide(benchmark::State& state) {
  const auto cfg = SystemConfig::make(std::vector<double>(state.range(0), 0.5), 0.7, 0.8, 1.0,
                                      std::nullopt);
  SystemState s = SystemState::zeros(cfg.num_sources);
  for (int i = 0; i < cfg.num_sources; ++i) s.sources[i] = SourceState{i, 2 * i + 1, 3};
  for (auto _ : state) benchmark::DoNotOptimize(dpp_decide(s, 12.5, cfg, DppConfig{100.0}));
}
BENCHMARK(BM_DppDecide)->Arg(2)->Arg(8)->Arg(32);

void BM_QNetworkForward(benchmark::State& state) {
  RandomStream rng(1, "bench");
  const int h = static_cast<int>(state.range(0));
  const QNetwork net(7, {h, h / 2}, 9, rng);
  const Eigen::MatrixXd batch = Eigen::MatrixXd::Random(7, state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(batch));
}
BENCHMARK(BM_QNetworkForward)->ArgsProduct({{64, 512}, {1, 64}})->ArgNames({"hidden", "batch"});

}  // namespace

BENCHMARK_MAIN();

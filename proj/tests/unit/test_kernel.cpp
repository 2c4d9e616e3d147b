#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "aoi/kernel.hpp"
#include "aoi/random.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace aoi;

TEST_CASE("state space size and indexing") {
  CHECK(StateIndexer(3, 1).size() == 20);
  CHECK(StateIndexer(3, 1).size() == oracle::count_simplex(3));
  CHECK(StateIndexer(10, 2).size() == 81796);
  CHECK(StateIndexer::simplex_count(10) == oracle::count_simplex(10));
  for (int n = 2; n <= 8; ++n) CHECK(StateIndexer::simplex_count(n) == oracle::count_simplex(n));

  const StateIndexer small(2, 1);
  for (std::size_t k = 0; k < small.size(); ++k) CHECK(small.encode(small.decode(k)) == k);

  const StateIndexer joint(4, 2);
  CHECK(joint.size() == 35 * 35);
  std::set<std::vector<int>> seen;
  for (std::size_t k = 0; k < joint.size(); ++k) {
    const SystemState s = joint.decode(k);
    CHECK(joint.encode(s) == k);
    std::vector<int> flat;
    for (const auto& src : s.sources) {
      CHECK(src.dest_aoi() <= 4);
      flat.insert(flat.end(), {src.theta, src.x, src.y});
    }
    seen.insert(flat);
  }
  CHECK(seen.size() == joint.size());
}

TEST_CASE("decreasing y lowers the joint index") {
  const StateIndexer idx(4, 2);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const SystemState s = idx.decode(k);
    for (int i = 0; i < 2; ++i) {
      if (s.sources[i].y == 0) continue;
      SystemState lower = s;
      --lower.sources[i].y;
      CHECK(idx.encode(lower) == k - idx.stride(i));
    }
  }
}

TEST_CASE("enumerate rejects unbounded systems") {
  const auto cfg = SystemConfig::make({0.5}, 0.5, 0.5, 1.0, std::nullopt);
  CHECK_THROWS(enumerate(cfg));
  CHECK_THROWS(build_kernel(cfg));
  const StateIndexer idx(3, 1);
  CHECK_THROWS_AS(idx.encode(SystemState{{SourceState{2, 2, 0}}}), std::out_of_range);
}

TEST_CASE("per-source branches, hand examples") {
  const SourceState s{2, 3, 1};
  auto rows = per_source_branches(s, true, true, 0.5, 0.7, 0.8, 10);
  CHECK(rows.size() == 8);
  bool found = false;
  double total = 0.0;
  for (const auto& r : rows) {
    total += r.probability;
    if (r.next == SourceState{0, 3, 3}) {
      found = true;
      CHECK(r.probability == doctest::Approx(0.28).epsilon(1e-12));
    }
  }
  CHECK(found);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

  for (int t = 0; t <= 5; ++t)
    for (int x = 0; t + x <= 5; ++x)
      for (int y = 0; t + x + y <= 5; ++y) {
        const SourceState q{t, x, y};
        const auto tl = tilde_triplet(q, 5);
        rows = per_source_branches(q, false, false, 1.0, 0.7, 0.8, 5);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].next == SourceState{0, tl.x + tl.theta, tl.y});
        CHECK(rows[0].probability == 1.0);
      }

  rows = per_source_branches(s, false, false, 0.5, 0.7, 0.8, 10);
  REQUIRE(rows.size() == 2);
  std::set<std::vector<int>> states;
  for (const auto& r : rows) {
    CHECK(r.probability == doctest::Approx(0.5));
    states.insert({r.next.theta, r.next.x, r.next.y});
  }
  CHECK(states == std::set<std::vector<int>>{{0, 6, 1}, {3, 3, 1}});
}

TEST_CASE("per-source branch counts by addressing pattern") {
  for (int t = 0; t <= 4; ++t)
    for (int x = 0; t + x <= 4; ++x)
      for (int y = 0; t + x + y <= 4; ++y) {
        const SourceState q{t, x, y};
        CHECK(per_source_branches(q, true, true, 0.4, 0.6, 0.7, 4).size() <= 8);
        CHECK(per_source_branches(q, true, false, 0.4, 0.6, 0.7, 4).size() <= 4);
        CHECK(per_source_branches(q, false, true, 0.4, 0.6, 0.7, 4).size() <= 4);
        CHECK(per_source_branches(q, false, false, 0.4, 0.6, 0.7, 4).size() <= 2);
      }
}

TEST_CASE("kernel rows are stochastic and match the brute-force oracle") {
  for (int sources = 1; sources <= 2; ++sources) {
    for (int n : {2, 3}) {
      const auto cfg = SystemConfig::make(sources == 1 ? std::vector<double>{0.45}
                                                       : std::vector<double>{1.0, 0.35},
                                          0.7, 0.8, 1.0, n);
      const TransitionKernel k = build_kernel(cfg);
      for (std::size_t s = 0; s < k.num_states(); ++s)
        for (int a = 0; a < k.num_actions(); ++a) {
          double sum = 0.0;
          std::map<std::size_t, double> row;
          for (const auto& e : k.successors(s, a)) {
            CHECK(e.probability > 0.0);
            CHECK(e.probability <= 1.0);
            sum += e.probability;
            CHECK(row.count(e.next) == 0);
            row[e.next] = e.probability;
          }
          CHECK(std::abs(sum - 1.0) <= 1e-12);
          const auto expect =
              oracle::brute_force_row(k.indexer(), cfg, s, decode_action(a, sources));
          REQUIRE(expect.size() == row.size());
          for (const auto& [next, p] : expect) {
            REQUIRE(row.count(next) == 1);
            CHECK(std::abs(row[next] - p) <= 1e-12);
          }
        }
    }
  }
}

TEST_CASE("joint branch count is bounded by the per-source product") {
  const auto cfg = SystemConfig::make({0.5, 0.6}, 0.7, 0.8, 1.0, 4);
  const TransitionKernel k = build_kernel(cfg);
  const int a = encode_action(Action{1, 1}, 2);
  for (std::size_t s = 0; s < k.num_states(); ++s) CHECK(k.successors(s, a).size() <= 16);
  CHECK(k.max_branches() <= 32);
}

TEST_CASE("generate-at-will saturated idle row") {
  const auto cfg = SystemConfig::make({1.0}, 0.5, 0.5, 1.0, 2);
  const TransitionKernel k = build_kernel(cfg);
  const auto& idx = k.indexer();
  const auto row = k.successors(idx.encode(SystemState{{SourceState{2, 0, 0}}}), 0);
  REQUIRE(row.size() == 1);
  CHECK(idx.decode(row[0].next) == SystemState{{SourceState{0, 2, 0}}});
  CHECK(row[0].probability == 1.0);
}

namespace {

PolicyTable random_policy(std::size_t states, int sources, RandomStream& rng) {
  PolicyTable p;
  for (std::size_t s = 0; s < states; ++s)
    p.actions.push_back(decode_action(static_cast<int>(rng.below(num_actions(sources))), sources));
  return p;
}

}  // namespace

TEST_CASE("accessible state") {
  auto cfg = SystemConfig::make({0.5}, 0.5, 0.5, 1.0, 2);
  CHECK(accessible_state(cfg) == SystemState{{SourceState{2, 0, 0}}});
  cfg = SystemConfig::make({1.0}, 0.5, 0.5, 1.0, 2);
  CHECK(accessible_state(cfg) == SystemState{{SourceState{0, 2, 0}}});
  cfg = SystemConfig::make({1.0, 0.3}, 0.5, 0.5, 1.0, 4);
  CHECK(accessible_state(cfg) == SystemState{{SourceState{0, 4, 0}, SourceState{4, 0, 0}}});
}

TEST_CASE("unichain under random deterministic policies") {
  RandomStream rng(17, "policies");
  for (double mu : {0.5, 1.0}) {
    const auto cfg = SystemConfig::make({mu}, 0.6, 0.7, 1.0, 2);
    const TransitionKernel k = build_kernel(cfg);
    for (int trial = 0; trial < 200; ++trial) {
      const auto policy = random_policy(k.num_states(), 1, rng);
      const auto report = check_unichain(k, policy, cfg);
      CHECK(report.accessible_from_all);
      CHECK_FALSE(report.witness.has_value());
    }
    // Every constant policy too.
    for (int a = 0; a < k.num_actions(); ++a) {
      PolicyTable p;
      p.actions.assign(k.num_states(), decode_action(a, 1));
      CHECK(check_unichain(k, p, cfg).accessible_from_all);
    }
  }
}

TEST_CASE("reachability checker reports a witness for two absorbing states") {
  SparseChain chain;
  chain.row_offsets = {0, 1, 2, 4};
  chain.entries = {{0, 1.0}, {1, 1.0}, {0, 0.5}, {1, 0.5}};
  const auto report = check_accessible(chain, 0);
  CHECK_FALSE(report.accessible_from_all);
  REQUIRE(report.witness.has_value());
  CHECK(*report.witness == 1);
  CHECK(report.unreached == 1);
  CHECK(check_accessible(chain, 1).witness == std::optional<std::size_t>(0));
}

TEST_CASE("monte carlo validation") {
  SUBCASE("deterministic rows are reproduced exactly") {
    const auto cfg = SystemConfig::make({1.0}, 1.0, 1.0, 1.0, 3);
    const TransitionKernel k = build_kernel(cfg);
    McOptions opt;
    opt.trials_per_pair = 200;
    const auto report = monte_carlo_validate(k, cfg, opt, 1);
    CHECK(report.pairs_checked == k.num_states() * 4);
    CHECK(report.violations.empty());
  }
  SUBCASE("the 0.28 branch lies within four standard errors") {
    const auto cfg = SystemConfig::make({0.5}, 0.7, 0.8, 1.0, 10);
    RandomStreams streams(23);
    const SystemState s{{SourceState{2, 3, 1}}};
    int hits = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
      hits += step(s, Action{1, 1}, cfg, streams).next_state == SystemState{{SourceState{0, 3, 3}}};
    const double se = std::sqrt(0.28 * 0.72 / trials);
    CHECK(std::abs(hits / double(trials) - 0.28) <= 4 * se);
  }
  SUBCASE("full sweep at N=3, I=1 is clean") {
    const auto cfg = SystemConfig::make({0.6}, 0.7, 0.8, 1.0, 3);
    const TransitionKernel k = build_kernel(cfg);
    McOptions opt;
    opt.trials_per_pair = 5000;
    const auto report = monte_carlo_validate(k, cfg, opt, 2024);
    CHECK(report.pairs_checked == 80);
    CHECK(report.violations.empty());
  }
  SUBCASE("a kernel built with the wrong link probability is caught") {
    const auto truth = SystemConfig::make({0.6}, 0.7, 0.8, 1.0, 3);
    const auto wrong = SystemConfig::make({0.6}, 0.5, 0.8, 1.0, 3);
    const TransitionKernel k = build_kernel(wrong);
    McOptions opt;
    opt.trials_per_pair = 5000;
    CHECK_FALSE(monte_carlo_validate(k, truth, opt, 5).violations.empty());
  }
}

TEST_CASE("kernel text export") {
  const auto cfg = SystemConfig::make({0.5}, 0.5, 0.5, 1.0, 2);
  const TransitionKernel k = build_kernel(cfg);
  std::ostringstream os;
  write_kernel_text(os, k);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "s_index,action_alpha,action_beta,next_index,prob");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == k.num_entries());
}

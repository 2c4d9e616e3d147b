#include "aoi/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <ostream>
#include <stdexcept>

namespace aoi {

StateIndexer::StateIndexer(int bound, int num_sources) : bound_(bound), num_sources_(num_sources) {
  if (bound < 0) throw ConfigError("state indexer needs a nonnegative bound");
  if (num_sources < 1) throw ConfigError("state indexer needs at least one source");
  const int side = bound + 1;
  cube_to_local_.assign(static_cast<std::size_t>(side) * side * side, -1);
  for (int theta = 0; theta <= bound; ++theta) {
    for (int x = 0; theta + x <= bound; ++x) {
      for (int y = 0; theta + x + y <= bound; ++y) {
        cube_to_local_[(static_cast<std::size_t>(theta) * side + x) * side + y] =
            static_cast<int>(local_states_.size());
        local_states_.push_back(SourceState{theta, x, y});
      }
    }
  }
  strides_.assign(static_cast<std::size_t>(num_sources), 1);
  for (int i = num_sources - 2; i >= 0; --i) strides_[i] = strides_[i + 1] * local_states_.size();
  size_ = strides_[0] * local_states_.size();
}

int StateIndexer::local_index(const SourceState& s) const {
  if (s.theta < 0 || s.x < 0 || s.y < 0 || s.dest_aoi() > bound_) return -1;
  const int side = bound_ + 1;
  return cube_to_local_[(static_cast<std::size_t>(s.theta) * side + s.x) * side + s.y];
}

std::size_t StateIndexer::encode(const SystemState& s) const {
  if (static_cast<int>(s.sources.size()) != num_sources_)
    throw std::invalid_argument("state has the wrong number of sources");
  std::size_t index = 0;
  for (int i = 0; i < num_sources_; ++i) {
    const int local = local_index(s.sources[i]);
    if (local < 0) throw std::out_of_range("state outside the bounded simplex: " + to_string(s));
    index += static_cast<std::size_t>(local) * strides_[i];
  }
  return index;
}

SystemState StateIndexer::decode(std::size_t index) const {
  if (index >= size_) throw std::out_of_range("state index out of range");
  SystemState s;
  s.sources.reserve(static_cast<std::size_t>(num_sources_));
  for (int i = 0; i < num_sources_; ++i) s.sources.push_back(local_states_[local_of(index, i)]);
  return s;
}

StateIndexer enumerate(const SystemConfig& cfg) {
  if (!cfg.bounded()) throw ConfigError("state enumeration requires a finite aoi_bound");
  return StateIndexer(cfg.bound(), cfg.num_sources);
}

std::vector<SourceBranch> per_source_branches(const SourceState& s, bool by_alpha, bool by_beta,
                                              double mu, double p1, double p2, int bound) {
  const Tilde t = tilde_triplet(s, bound);
  std::vector<SourceBranch> rows;
  rows.reserve(8);
  for (int arrival = 1; arrival >= 0; --arrival) {
    const double pa = arrival ? mu : 1.0 - mu;
    for (int r1 = by_alpha ? 1 : 0; r1 >= 0; --r1) {
      const double pr1 = by_alpha ? (r1 ? p1 : 1.0 - p1) : 1.0;
      for (int r2 = by_beta ? 1 : 0; r2 >= 0; --r2) {
        const double pr2 = by_beta ? (r2 ? p2 : 1.0 - p2) : 1.0;
        const double prob = pa * pr1 * pr2;
        if (prob <= 0.0) continue;
        SourceState next;
        next.theta = arrival ? 0 : t.theta;
        // Relay reception replaces its copy with the transmitter's packet.
        next.x = r1 ? (arrival ? t.theta : 0) : (arrival ? t.x + t.theta : t.x);
        // Destination reception replaces its copy with the relay's slot-start packet.
        next.y = r2 ? (r1 ? t.x : 0) : (r1 ? t.y + t.x : t.y);
        rows.push_back(SourceBranch{next, prob});
      }
    }
  }
  return rows;
}

TransitionKernel::TransitionKernel(StateIndexer indexer, std::vector<std::size_t> row_offsets,
                                   std::vector<Successor> successors)
    : indexer_(std::move(indexer)),
      num_actions_(aoi::num_actions(indexer_.num_sources())),
      row_offsets_(std::move(row_offsets)),
      successors_(std::move(successors)) {
  if (row_offsets_.size() != indexer_.size() * static_cast<std::size_t>(num_actions_) + 1)
    throw std::invalid_argument("row offsets do not match the state/action count");
}

std::size_t TransitionKernel::max_branches() const {
  std::size_t best = 0;
  for (std::size_t r = 0; r + 1 < row_offsets_.size(); ++r)
    best = std::max(best, row_offsets_[r + 1] - row_offsets_[r]);
  return best;
}

namespace {

struct LocalBranch {
  int local;
  double probability;
};

}  // namespace

TransitionKernel build_kernel(const SystemConfig& cfg) {
  cfg.validate();
  StateIndexer indexer = enumerate(cfg);
  const int sources = cfg.num_sources;
  const int n_actions = num_actions(sources);
  const std::size_t locals = indexer.per_source_count();

  // branch_table[source][local * 4 + pattern], pattern = 2*by_alpha + by_beta.
  std::vector<std::vector<std::vector<LocalBranch>>> branch_table(
      static_cast<std::size_t>(sources), std::vector<std::vector<LocalBranch>>(locals * 4));
  for (int i = 0; i < sources; ++i) {
    for (std::size_t l = 0; l < locals; ++l) {
      for (int pattern = 0; pattern < 4; ++pattern) {
        auto rows = per_source_branches(indexer.local_state(static_cast<int>(l)), pattern & 2,
                                        pattern & 1, cfg.arrival_rates[i], cfg.p1, cfg.p2,
                                        cfg.bound());
        auto& out = branch_table[i][l * 4 + pattern];
        for (const auto& row : rows) {
          const int next = indexer.local_index(row.next);
          if (next < 0) throw std::logic_error("transition row left the simplex");
          out.push_back(LocalBranch{next, row.probability});
        }
      }
    }
  }

  std::vector<std::size_t> offsets;
  offsets.reserve(indexer.size() * n_actions + 1);
  offsets.push_back(0);
  std::vector<Successor> entries;
  entries.reserve(indexer.size() * n_actions * 6);

  std::vector<Successor> scratch;
  std::vector<Successor> grow;
  for (std::size_t s = 0; s < indexer.size(); ++s) {
    for (int a = 0; a < n_actions; ++a) {
      const Action act = decode_action(a, sources);
      scratch.assign(1, Successor{0, 1.0});
      for (int i = 0; i < sources; ++i) {
        const int pattern = (act.alpha == i + 1 ? 2 : 0) + (act.beta == i + 1 ? 1 : 0);
        const auto& branches = branch_table[i][indexer.local_of(s, i) * 4 + pattern];
        grow.clear();
        for (const auto& partial : scratch) {
          for (const auto& b : branches) {
            grow.push_back(Successor{
                static_cast<std::uint32_t>(partial.next + b.local * indexer.stride(i)),
                partial.probability * b.probability});
          }
        }
        scratch.swap(grow);
      }
      std::sort(scratch.begin(), scratch.end(),
                [](const Successor& l, const Successor& r) { return l.next < r.next; });
      for (const auto& succ : scratch) {
        if (offsets.back() < entries.size() && entries.back().next == succ.next)
          entries.back().probability += succ.probability;
        else
          entries.push_back(succ);
      }
      offsets.push_back(entries.size());
    }
  }
  entries.shrink_to_fit();
  return TransitionKernel(std::move(indexer), std::move(offsets), std::move(entries));
}

SystemState accessible_state(const SystemConfig& cfg) {
  if (!cfg.bounded()) throw ConfigError("the accessible state is defined for bounded AoI only");
  SystemState s;
  for (int i = 0; i < cfg.num_sources; ++i) {
    if (cfg.arrival_rates[i] >= 1.0)
      s.sources.push_back(SourceState{0, cfg.bound(), 0});
    else
      s.sources.push_back(SourceState{cfg.bound(), 0, 0});
  }
  return s;
}

SparseChain induced_chain(const TransitionKernel& kernel, const PolicyTable& policy) {
  if (policy.size() != kernel.num_states())
    throw std::invalid_argument("policy does not cover the state space");
  const int sources = kernel.indexer().num_sources();
  SparseChain chain;
  chain.row_offsets.reserve(kernel.num_states() + 1);
  chain.row_offsets.push_back(0);
  for (std::size_t s = 0; s < kernel.num_states(); ++s) {
    const auto row = kernel.successors(s, encode_action(policy[s], sources));
    chain.entries.insert(chain.entries.end(), row.begin(), row.end());
    chain.row_offsets.push_back(chain.entries.size());
  }
  return chain;
}

ReachabilityReport check_accessible(const SparseChain& chain, std::size_t target) {
  const std::size_t n = chain.num_states();
  if (target >= n) throw std::out_of_range("target state outside the chain");

  // Reverse adjacency in CSR form.
  std::vector<std::size_t> in_count(n + 1, 0);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& e : chain.row(s))
      if (e.probability > 0.0) ++in_count[e.next + 1];
  for (std::size_t s = 0; s < n; ++s) in_count[s + 1] += in_count[s];
  std::vector<std::uint32_t> preds(in_count[n]);
  std::vector<std::size_t> fill(in_count.begin(), in_count.end() - 1);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& e : chain.row(s))
      if (e.probability > 0.0) preds[fill[e.next]++] = static_cast<std::uint32_t>(s);

  std::vector<char> seen(n, 0);
  std::deque<std::size_t> frontier{target};
  seen[target] = 1;
  while (!frontier.empty()) {
    const std::size_t cur = frontier.front();
    frontier.pop_front();
    for (std::size_t k = in_count[cur]; k < in_count[cur + 1]; ++k) {
      if (!seen[preds[k]]) {
        seen[preds[k]] = 1;
        frontier.push_back(preds[k]);
      }
    }
  }

  ReachabilityReport report;
  for (std::size_t s = 0; s < n; ++s) {
    if (!seen[s]) {
      if (!report.witness) report.witness = s;
      ++report.unreached;
    }
  }
  report.accessible_from_all = report.unreached == 0;
  return report;
}

ReachabilityReport check_unichain(const TransitionKernel& kernel, const PolicyTable& policy,
                                  const SystemConfig& cfg) {
  return check_accessible(induced_chain(kernel, policy),
                          kernel.indexer().encode(accessible_state(cfg)));
}

McReport monte_carlo_validate(const TransitionKernel& kernel, const SystemConfig& cfg,
                              const McOptions& options, std::uint64_t seed) {
  const auto& indexer = kernel.indexer();
  const int n_actions = kernel.num_actions();
  const std::size_t total_pairs = kernel.num_states() * static_cast<std::size_t>(n_actions);

  RandomStream picker(seed, "mc-pairs");
  std::vector<std::size_t> pairs;
  if (options.max_pairs == 0 || options.max_pairs >= total_pairs) {
    pairs.resize(total_pairs);
    for (std::size_t k = 0; k < total_pairs; ++k) pairs[k] = k;
  } else {
    for (std::size_t k = 0; k < options.max_pairs; ++k) pairs.push_back(picker.below(total_pairs));
  }

  RandomStreams streams(seed);
  McReport report;
  std::map<std::size_t, int> counts;
  for (std::size_t pair : pairs) {
    const std::size_t s = pair / n_actions;
    const int a = static_cast<int>(pair % n_actions);
    const Action act = decode_action(a, cfg.num_sources);
    const SystemState state = indexer.decode(s);
    counts.clear();
    for (int t = 0; t < options.trials_per_pair; ++t)
      ++counts[indexer.encode(step(state, act, cfg, streams).next_state)];

    const double trials = options.trials_per_pair;
    for (const auto& succ : kernel.successors(s, a)) {
      const auto it = counts.find(succ.next);
      const double observed = it == counts.end() ? 0.0 : it->second / trials;
      const double p = succ.probability;
      const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / trials);
      if (std::abs(observed - p) > options.z_threshold * se + 1e-12)
        report.violations.push_back(McViolation{s, act, succ.next, p, observed});
      if (it != counts.end()) counts.erase(it);
      ++report.branches_checked;
    }
    for (const auto& [next, count] : counts)
      report.violations.push_back(McViolation{s, act, next, 0.0, count / trials});
    ++report.pairs_checked;
  }
  return report;
}

void write_kernel_text(std::ostream& os, const TransitionKernel& kernel) {
  const int sources = kernel.indexer().num_sources();
  os << "s_index,action_alpha,action_beta,next_index,prob\n";
  const auto old_precision = os.precision(17);
  for (std::size_t s = 0; s < kernel.num_states(); ++s) {
    for (int a = 0; a < kernel.num_actions(); ++a) {
      const Action act = decode_action(a, sources);
      for (const auto& succ : kernel.successors(s, a))
        os << s << ',' << act.alpha << ',' << act.beta << ',' << succ.next << ','
           << succ.probability << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace aoi

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "aoi/model.hpp"
#include "aoi/policy_table.hpp"
#include "aoi/random.hpp"

namespace aoi {

/// Dense indexing of the bounded state space. Each source lives on the
/// simplex theta + x + y <= N, enumerated lexicographically in (theta, x, y)
/// with y fastest; the joint index is mixed radix with source 1 most
/// significant. Decreasing any y_i therefore always decreases the joint index.
class StateIndexer {
 public:
  StateIndexer(int bound, int num_sources);

  int bound() const { return bound_; }
  int num_sources() const { return num_sources_; }
  std::size_t per_source_count() const { return local_states_.size(); }
  std::size_t size() const { return size_; }

  /// -1 when the triple lies outside the simplex.
  int local_index(const SourceState& s) const;
  const SourceState& local_state(int index) const { return local_states_[index]; }

  std::size_t encode(const SystemState& s) const;
  SystemState decode(std::size_t index) const;

  /// Local index of source `source` (0-based) inside a joint index.
  int local_of(std::size_t joint, int source) const {
    return static_cast<int>((joint / strides_[source]) % local_states_.size());
  }
  std::size_t stride(int source) const { return strides_[source]; }

  static std::size_t simplex_count(int bound) {
    const auto n = static_cast<std::size_t>(bound);
    return (n + 1) * (n + 2) * (n + 3) / 6;
  }

 private:
  int bound_;
  int num_sources_;
  std::size_t size_ = 0;
  std::vector<SourceState> local_states_;
  std::vector<int> cube_to_local_;  // (N+1)^3 lookup
  std::vector<std::size_t> strides_;
};

/// Rejects unbounded configurations.
StateIndexer enumerate(const SystemConfig& cfg);

struct SourceBranch {
  SourceState next;
  double probability;
};

/// The nonzero rows of the per-source transition law for one addressing
/// pattern (whether alpha and/or beta schedule this source).
std::vector<SourceBranch> per_source_branches(const SourceState& s, bool by_alpha, bool by_beta,
                                              double mu, double p1, double p2, int bound);

struct Successor {
  std::uint32_t next;
  double probability;
};

/// Sparse successor lists for every (state, action) pair.
class TransitionKernel {
 public:
  TransitionKernel(StateIndexer indexer, std::vector<std::size_t> row_offsets,
                   std::vector<Successor> successors);

  const StateIndexer& indexer() const { return indexer_; }
  std::size_t num_states() const { return indexer_.size(); }
  int num_actions() const { return num_actions_; }

  std::span<const Successor> successors(std::size_t state, int action) const {
    const std::size_t row = state * static_cast<std::size_t>(num_actions_) + action;
    return {successors_.data() + row_offsets_[row], row_offsets_[row + 1] - row_offsets_[row]};
  }

  std::size_t num_entries() const { return successors_.size(); }
  std::size_t max_branches() const;

 private:
  StateIndexer indexer_;
  int num_actions_;
  std::vector<std::size_t> row_offsets_;
  std::vector<Successor> successors_;
};

/// Joint successors as the product of per-source branches; duplicate next
/// states are merged by adding probabilities.
TransitionKernel build_kernel(const SystemConfig& cfg);

/// The state reachable from everywhere under any deterministic policy:
/// (0, N, 0) for sources with mu = 1 and (N, 0, 0) otherwise.
SystemState accessible_state(const SystemConfig& cfg);

/// Policy-induced Markov chain in compressed-row form.
struct SparseChain {
  std::vector<std::size_t> row_offsets;
  std::vector<Successor> entries;

  std::size_t num_states() const { return row_offsets.empty() ? 0 : row_offsets.size() - 1; }
  std::span<const Successor> row(std::size_t s) const {
    return {entries.data() + row_offsets[s], row_offsets[s + 1] - row_offsets[s]};
  }
};

SparseChain induced_chain(const TransitionKernel& kernel, const PolicyTable& policy);

struct ReachabilityReport {
  bool accessible_from_all = false;
  std::optional<std::size_t> witness;  // a state that cannot reach the target
  std::size_t unreached = 0;
};

/// Reverse breadth-first search from `target` over positive-probability edges.
ReachabilityReport check_accessible(const SparseChain& chain, std::size_t target);

ReachabilityReport check_unichain(const TransitionKernel& kernel, const PolicyTable& policy,
                                  const SystemConfig& cfg);

struct McViolation {
  std::size_t state;
  Action action;
  std::size_t next;
  double expected;
  double observed;
};

struct McReport {
  std::size_t pairs_checked = 0;
  std::size_t branches_checked = 0;
  std::vector<McViolation> violations;
};

struct McOptions {
  int trials_per_pair = 5000;
  std::size_t max_pairs = 0;  // 0 checks every (state, action) pair
  double z_threshold = 4.5;  // 0 of 1000 seeds flagged a correct N=3 kernel at 5000 trials
};

/// Compares empirical one-step frequencies from `step` against the kernel.
/// A branch fails when |freq - p| exceeds z standard errors, or when the
/// simulator produces a successor the kernel does not list.
McReport monte_carlo_validate(const TransitionKernel& kernel, const SystemConfig& cfg,
                              const McOptions& options, std::uint64_t seed);

/// `s_index,action_alpha,action_beta,next_index,prob` lines, with a header.
void write_kernel_text(std::ostream& os, const TransitionKernel& kernel);

}  // namespace aoi

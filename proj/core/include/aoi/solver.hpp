#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "aoi/kernel.hpp"
#include "aoi/model.hpp"
#include "aoi/policy_table.hpp"

namespace aoi {

/// Raised when an iterative routine stops without meeting its tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

struct SolverConfig {
  double zeta = 0.1;          // bisection width tolerance
  double epsilon = 1e-3;      // RVIA span tolerance
  double lambda_minus = 0.0;  // initial bracket
  double lambda_plus = 1.0;   // doubled until feasible
  std::size_t reference_state = 0;
  int max_sweeps = 200000;
  int max_bisections = 200;
  int max_expansions = 60;
  double stationary_tolerance = 1e-10;
  int max_power_iterations = 5000000;
  bool use_structure = true;

  void validate() const;
};

/// Immediate costs of the Lagrangian-relaxed MDP over an enumerated kernel.
class LagrangianMdp {
 public:
  LagrangianMdp(const TransitionKernel& kernel, const SystemConfig& cfg);

  const TransitionKernel& kernel() const { return *kernel_; }
  const SystemConfig& config() const { return cfg_; }
  std::size_t num_states() const { return state_cost_.size(); }
  int num_actions() const { return kernel_->num_actions(); }

  double state_cost(std::size_t s) const { return state_cost_[s]; }
  int action_tx(int a) const { return action_tx_[a]; }
  double cost(std::size_t s, int a, double lambda) const {
    return state_cost_[s] + lambda * (action_tx_[a] - cfg_.gamma_max);
  }

 private:
  const TransitionKernel* kernel_;
  SystemConfig cfg_;
  std::vector<double> state_cost_;
  std::vector<int> action_tx_;
};

/// C(s) + lambda * (D(a) - gamma_max).
double lagrangian_cost(const SystemState& s, Action a, double lambda, const SystemConfig& cfg);

/// Value iterates of relative value iteration. `relative` holds
/// h(s) = V(s) - V(s_ref).
struct RviaWorkspace {
  std::vector<double> value;
  std::vector<double> relative;
  std::vector<double> relative_old;

  /// V = 0, h = 0, h_old = 1.
  static RviaWorkspace initial(std::size_t num_states);
};

struct SweepStats {
  double span = 0.0;                   // max_s |h_new - h|
  std::size_t restricted_states = 0;   // states whose beta was fixed by the switching rule
  std::size_t ambiguous_states = 0;    // states where two sources qualified; searched fully
};

/// One Jacobi sweep. Writes V_{n+1}, shifts h into h_old and stores h_{n+1};
/// `policy` receives the greedy actions. With `use_structure`, a state whose
/// y_i-predecessor chain already chose beta = i in this sweep only searches alpha.
/// Ties go to the lexicographically smallest (alpha, beta).
SweepStats rvia_sweep(RviaWorkspace& ws, const LagrangianMdp& mdp, double lambda,
                      bool use_structure, std::size_t reference_state, PolicyTable& policy);

struct MdpSolution {
  PolicyTable policy;
  std::vector<double> value;     // V at termination
  std::vector<double> relative;  // h at termination
  double gain = 0.0;             // V(s_ref), estimate of the optimal Lagrangian average
  double span = 0.0;
  int sweeps = 0;
  std::size_t restricted_states = 0;
};

/// Iterates sweeps until the span drops to epsilon. Throws SolverError
/// carrying the last span when max_sweeps is exhausted.
MdpSolution solve_mdp(const LagrangianMdp& mdp, double lambda, const SolverConfig& solver);

/// max_s |min_a {L + sum P h} - V(s)| using a full (unstructured) search.
double bellman_residual(const LagrangianMdp& mdp, double lambda, const std::vector<double>& value,
                        const std::vector<double>& relative);

/// Bellman-greedy policy with respect to h, searched over all actions.
PolicyTable greedy_policy(const LagrangianMdp& mdp, double lambda,
                          const std::vector<double>& relative);

struct PolicyMetrics {
  double ws_aaoi = 0.0;       // J
  double avg_tx = 0.0;        // D-bar
  std::vector<double> stationary;
  int iterations = 0;
};

/// Stationary distribution of the policy-induced chain by power iteration.
PolicyMetrics evaluate_policy(const LagrangianMdp& mdp, const PolicyTable& policy,
                              const SolverConfig& solver);

/// Power iteration on an explicit chain, starting from the uniform vector.
std::vector<double> stationary_distribution(const SparseChain& chain, double tolerance,
                                            int max_iterations, int* iterations = nullptr);

struct BisectionStep {
  double lambda;
  double ws_aaoi;
  double avg_tx;
  int sweeps;
  bool feasible;
};

struct BisectionResult {
  bool constraint_slack = false;
  double lambda_plus = 0.0;
  double lambda_minus = 0.0;
  MdpSolution plus;
  MdpSolution minus;
  PolicyMetrics plus_metrics;
  PolicyMetrics minus_metrics;
  std::vector<BisectionStep> trace;
};

/// Bisection over the Lagrange multiplier with RVIA at each probe. On return
/// the lambda_plus policy is feasible and the lambda_minus policy, when the
/// budget binds, is infeasible and bounds the constrained optimum from below.
BisectionResult bisect(const LagrangianMdp& mdp, const SolverConfig& solver);

struct SwitchingViolation {
  std::size_t state;   // beta(state) = source
  int source;          // 1-based
  std::size_t higher;  // state + e_y(source), where beta differs
};

/// For each state with beta = i, checks that incrementing y_i keeps beta = i.
std::vector<SwitchingViolation> verify_switching(const PolicyTable& policy,
                                                 const StateIndexer& indexer);

/// The same check for alpha along x_i. Informational only.
std::vector<SwitchingViolation> alpha_switching_report(const PolicyTable& policy,
                                                       const StateIndexer& indexer);

struct MonotonicityViolation {
  std::size_t state;
  int source;     // 1-based
  int component;  // 0 theta, 1 x, 2 y
  double drop;    // V(s) - V(s + e)
};

std::vector<MonotonicityViolation> verify_value_monotonicity(const std::vector<double>& value,
                                                             const StateIndexer& indexer,
                                                             double tolerance = 1e-8);

/// Stable hexadecimal digest of every field of the configuration.
std::string config_digest(const SystemConfig& cfg);

/// `#config-digest=`, `#lambda=`, `#bellman-residual=` headers followed by
/// `state_index,alpha,beta` rows.
void write_policy(std::ostream& os, const PolicyTable& policy, const std::string& digest);

/// Rejects files whose digest differs from `expected_digest`.
PolicyTable read_policy(std::istream& is, const std::string& expected_digest,
                        std::size_t expected_states, int num_sources);

}  // namespace aoi

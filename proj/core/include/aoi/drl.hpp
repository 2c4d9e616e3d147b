#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aoi/model.hpp"
#include "aoi/random.hpp"

namespace aoi {

struct DrlConfig {
  double tradeoff = 100.0;  // V in the Lyapunov-shaped reward
  double discount = 0.99;
  std::vector<int> hidden{512, 256};
  double learning_rate = 1e-4;
  int batch_size = 64;
  std::size_t replay_capacity = 100000;
  std::size_t min_replay = 1000;
  int target_sync = 1000;  // steps between hard copies online -> target
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_decay_fraction = 0.2;  // of total steps, linear
  int steps_per_episode = 600;
  int episodes = 200;
  double state_scale = 50.0;  // AoI / scale, H / (gamma_max * scale)
  double reward_scale = 1000.0;  // rewards are divided by this before learning
  double grad_clip = 10.0;
  double rmsprop_decay = 0.99;
  double rmsprop_epsilon = 1e-8;
  // When false, AoI state and backlog carry across episode boundaries and an
  // episode only delimits logging.
  bool reset_each_episode = false;

  void validate() const;
};

/// Affine layer y = W x + b.
struct Dense {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const {
    return (weight * input).colwise() + bias;
  }
};

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

/// Dueling head: Q = value + advantage - mean(advantage), per column.
Eigen::MatrixXd dueling_aggregate(const Eigen::RowVectorXd& value, const Eigen::MatrixXd& advantage);

/// Same shapes as the network's layer list.
using Gradients = std::vector<Dense>;

/// Fully connected ReLU stack feeding a scalar value head and a per-action
/// advantage head, both linear on the last hidden layer.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(int input_size, const std::vector<int>& hidden, int num_actions, RandomStream& rng);

  int input_size() const { return input_size_; }
  int num_actions() const { return num_actions_; }
  std::vector<int> hidden_sizes() const;

  /// Columns are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& states) const;
  Eigen::VectorXd forward_one(const Eigen::VectorXd& state) const;

  /// Mean over the batch of 0.5 * (Q(s_j, a_j) - target_j)^2 and its gradient.
  double loss_and_gradient(const Eigen::MatrixXd& states, const std::vector<int>& actions,
                           const Eigen::VectorXd& targets, Gradients& grad) const;

  /// Hidden layers, then the value head, then the advantage head.
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }

  Gradients zero_like() const;

 private:
  int input_size_ = 0;
  int num_actions_ = 0;
  std::vector<Dense> layers_;
};

double gradient_norm(const Gradients& g);
void scale_gradients(Gradients& g, double factor);

/// Per-parameter adaptive step: s <- rho s + (1 - rho) g^2,
/// theta <- theta - lr g / (sqrt(s) + eps).
class RmsProp {
 public:
  RmsProp(const QNetwork& net, double learning_rate, double decay, double epsilon);
  void apply(QNetwork& net, const Gradients& grad);

 private:
  double lr_;
  double decay_;
  double eps_;
  Gradients mean_square_;
};

/// r + discount * target_q[argmax online_q].
double double_q_target(double reward, double discount, const Eigen::VectorXd& online_next,
                       const Eigen::VectorXd& target_next);

/// -(H'^2/2 - H^2/2 + V * sum_i w_i delta_i').
double lyapunov_reward(double backlog, double next_backlog, double weighted_dest_aoi,
                       double tradeoff);

struct Transition {
  Eigen::VectorXd state;
  int action = 0;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool terminal = false;
};

/// Fixed-capacity ring of transitions.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t min_fill);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool ready() const { return size_ >= min_fill_; }

  /// Distinct indices drawn uniformly from the filled part. Throws before
  /// min_fill transitions have been stored.
  std::vector<std::size_t> sample_indices(std::size_t batch, RandomStream& rng) const;
  const Transition& at(std::size_t index) const { return data_[index]; }

 private:
  std::size_t capacity_;
  std::size_t min_fill_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

/// Augmented observation (theta, x, y per source, H), normalised.
Eigen::VectorXd encode_observation(const SystemState& s, double backlog, const SystemConfig& cfg,
                                   double state_scale);

struct TrainStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  bool synced = false;
};

/// Online and target networks plus optimiser state.
class D3qnAgent {
 public:
  D3qnAgent(const SystemConfig& cfg, const DrlConfig& drl, std::uint64_t seed);

  /// One minibatch update from `buffer`; copies online -> target every
  /// `target_sync` updates. Throws std::runtime_error on a non-finite loss.
  TrainStats train_step(const ReplayBuffer& buffer, RandomStream& rng);

  int greedy_action(const Eigen::VectorXd& observation) const;
  void sync_target() { target_ = online_; }

  const QNetwork& online() const { return online_; }
  QNetwork& online() { return online_; }
  const QNetwork& target() const { return target_; }
  long updates() const { return updates_; }

 private:
  DrlConfig drl_;
  QNetwork online_;
  QNetwork target_;
  RmsProp optimizer_;
  long updates_ = 0;
};

struct EpisodeLog {
  int episode = 0;
  double episodic_reward = 0.0;  // sum of unscaled Lyapunov rewards
  double mean_tx = 0.0;
  double ws_aaoi = 0.0;          // mean weighted destination AoI over the episode
  double mean_loss = 0.0;
};

struct TrainResult {
  QNetwork network;
  std::vector<EpisodeLog> episodes;
};

/// Epsilon-greedy interaction with the unbounded simulator; H follows the
/// virtual queue update. State and H carry over between episodes unless
/// `reset_each_episode` is set.
TrainResult train_d3qn(const SystemConfig& cfg, const DrlConfig& drl, std::uint64_t seed);

/// `episode,episodic_reward,mean_tx_per_slot,ws_aaoi`
void write_training_log(std::ostream& os, const std::vector<EpisodeLog>& log);

/// JSON header line followed by whitespace-separated parameters.
void save_checkpoint(std::ostream& os, const QNetwork& net, const std::string& digest,
                     const DrlConfig& drl);
/// An empty `expected_digest` accepts any digest.
QNetwork load_checkpoint(std::istream& is, const std::string& expected_digest);

/// Frozen network acting greedily on (s, H), with its own virtual queue.
class DrlPolicy {
 public:
  DrlPolicy(QNetwork net, SystemConfig cfg, double state_scale)
      : net_(std::move(net)), cfg_(std::move(cfg)), scale_(state_scale) {}

  Action decide(const SystemState& s) const;
  void observe(Action a);
  double backlog() const { return backlog_; }

 private:
  QNetwork net_;
  SystemConfig cfg_;
  double scale_;
  double backlog_ = 0.0;
};

}  // namespace aoi

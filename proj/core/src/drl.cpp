#include "aoi/drl.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "aoi/dpp.hpp"
#include "json.hpp"

namespace aoi {

void DrlConfig::validate() const {
  if (!(tradeoff >= 0.0)) throw ConfigError("drl.tradeoff must be nonnegative");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("drl.discount must lie in [0, 1)");
  if (hidden.empty()) throw ConfigError("drl.hidden needs at least one layer");
  for (int h : hidden)
    if (h <= 0) throw ConfigError("drl.hidden sizes must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("drl.learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("drl.batch_size must be positive");
  if (replay_capacity == 0) throw ConfigError("drl.replay_capacity must be positive");
  if (min_replay < static_cast<std::size_t>(batch_size) || min_replay > replay_capacity)
    throw ConfigError("drl.min_replay must lie in [batch_size, replay_capacity]");
  if (target_sync <= 0) throw ConfigError("drl.target_sync must be positive");
  if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= eps_start))
    throw ConfigError("drl.eps_start/eps_end must satisfy 0 <= eps_end <= eps_start <= 1");
  if (!(eps_decay_fraction > 0.0 && eps_decay_fraction <= 1.0))
    throw ConfigError("drl.eps_decay_fraction must lie in (0, 1]");
  if (steps_per_episode <= 0) throw ConfigError("drl.steps_per_episode must be positive");
  if (episodes <= 0) throw ConfigError("drl.episodes must be positive");
  if (!(state_scale > 0.0)) throw ConfigError("drl.state_scale must be positive");
  if (!(reward_scale > 0.0)) throw ConfigError("drl.reward_scale must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("drl.grad_clip must be positive");
  if (!(rmsprop_decay >= 0.0 && rmsprop_decay < 1.0))
    throw ConfigError("drl.rmsprop_decay must lie in [0, 1)");
  if (!(rmsprop_epsilon > 0.0)) throw ConfigError("drl.rmsprop_epsilon must be positive");
}

Eigen::MatrixXd dueling_aggregate(const Eigen::RowVectorXd& value,
                                  const Eigen::MatrixXd& advantage) {
  // Center first so a constant advantage shift cancels before value is added.
  Eigen::MatrixXd q = advantage.rowwise() - advantage.colwise().mean();
  q.rowwise() += value;
  return q;
}

namespace {

Dense make_dense(int in, int out, RandomStream& rng) {
  Dense d;
  d.weight.resize(out, in);
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < d.weight.cols(); ++c)
      d.weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
  d.bias = Eigen::VectorXd::Zero(out);
  return d;
}

}  // namespace

QNetwork::QNetwork(int input_size, const std::vector<int>& hidden, int num_actions,
                   RandomStream& rng)
    : input_size_(input_size), num_actions_(num_actions) {
  if (input_size <= 0 || num_actions <= 0 || hidden.empty())
    throw std::invalid_argument("QNetwork: bad layer sizes");
  int in = input_size;
  for (int h : hidden) {
    layers_.push_back(make_dense(in, h, rng));
    in = h;
  }
  layers_.push_back(make_dense(in, 1, rng));
  layers_.push_back(make_dense(in, num_actions, rng));
}

std::vector<int> QNetwork::hidden_sizes() const {
  std::vector<int> out;
  for (std::size_t l = 0; l + 2 < layers_.size(); ++l)
    out.push_back(static_cast<int>(layers_[l].weight.rows()));
  return out;
}

Eigen::MatrixXd QNetwork::forward(const Eigen::MatrixXd& states) const {
  Eigen::MatrixXd a = states;
  const std::size_t hidden = layers_.size() - 2;
  for (std::size_t l = 0; l < hidden; ++l) a = relu(layers_[l].forward(a));
  const Eigen::RowVectorXd v = layers_[hidden].forward(a).row(0);
  return dueling_aggregate(v, layers_[hidden + 1].forward(a));
}

Eigen::VectorXd QNetwork::forward_one(const Eigen::VectorXd& state) const {
  return forward(state).col(0);
}

Gradients QNetwork::zero_like() const {
  Gradients g(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    g[l].weight = Eigen::MatrixXd::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
    g[l].bias = Eigen::VectorXd::Zero(layers_[l].bias.size());
  }
  return g;
}

double QNetwork::loss_and_gradient(const Eigen::MatrixXd& states, const std::vector<int>& actions,
                                   const Eigen::VectorXd& targets, Gradients& grad) const {
  const Eigen::Index batch = states.cols();
  if (static_cast<Eigen::Index>(actions.size()) != batch || targets.size() != batch)
    throw std::invalid_argument("loss_and_gradient: batch size mismatch");
  const std::size_t hidden = layers_.size() - 2;

  std::vector<Eigen::MatrixXd> pre(hidden);
  std::vector<Eigen::MatrixXd> act(hidden + 1);
  act[0] = states;
  for (std::size_t l = 0; l < hidden; ++l) {
    pre[l] = layers_[l].forward(act[l]);
    act[l + 1] = relu(pre[l]);
  }
  const Eigen::MatrixXd& top = act[hidden];
  const Eigen::RowVectorXd v = layers_[hidden].forward(top).row(0);
  const Eigen::MatrixXd q = dueling_aggregate(v, layers_[hidden + 1].forward(top));

  Eigen::RowVectorXd dq(batch);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double err = q(actions[static_cast<std::size_t>(j)], j) - targets(j);
    loss += 0.5 * err * err;
    dq(j) = err / static_cast<double>(batch);
  }
  loss /= static_cast<double>(batch);

  // dQ_a/dv = 1, dQ_a/dadv_k = [k == a] - 1/|A|.
  Eigen::MatrixXd d_adv = Eigen::MatrixXd::Zero(num_actions_, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    d_adv.col(j).setConstant(-dq(j) / static_cast<double>(num_actions_));
    d_adv(actions[static_cast<std::size_t>(j)], j) += dq(j);
  }

  grad = zero_like();
  grad[hidden].weight = dq * top.transpose();
  grad[hidden].bias(0) = dq.sum();
  grad[hidden + 1].weight = d_adv * top.transpose();
  grad[hidden + 1].bias = d_adv.rowwise().sum();

  Eigen::MatrixXd upstream =
      layers_[hidden].weight.transpose() * dq + layers_[hidden + 1].weight.transpose() * d_adv;
  for (std::size_t l = hidden; l-- > 0;) {
    const Eigen::MatrixXd dz = upstream.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    grad[l].weight = dz * act[l].transpose();
    grad[l].bias = dz.rowwise().sum();
    if (l > 0) upstream = layers_[l].weight.transpose() * dz;
  }
  return loss;
}

double gradient_norm(const Gradients& g) {
  double sq = 0.0;
  for (const auto& d : g) sq += d.weight.squaredNorm() + d.bias.squaredNorm();
  return std::sqrt(sq);
}

void scale_gradients(Gradients& g, double factor) {
  for (auto& d : g) {
    d.weight *= factor;
    d.bias *= factor;
  }
}

RmsProp::RmsProp(const QNetwork& net, double learning_rate, double decay, double epsilon)
    : lr_(learning_rate), decay_(decay), eps_(epsilon), mean_square_(net.zero_like()) {}

void RmsProp::apply(QNetwork& net, const Gradients& grad) {
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& ms = mean_square_[l];
    ms.weight = decay_ * ms.weight + (1.0 - decay_) * grad[l].weight.cwiseAbs2();
    ms.bias = decay_ * ms.bias + (1.0 - decay_) * grad[l].bias.cwiseAbs2();
    layers[l].weight.array() -= lr_ * grad[l].weight.array() / (ms.weight.array().sqrt() + eps_);
    layers[l].bias.array() -= lr_ * grad[l].bias.array() / (ms.bias.array().sqrt() + eps_);
  }
}

double double_q_target(double reward, double discount, const Eigen::VectorXd& online_next,
                       const Eigen::VectorXd& target_next) {
  Eigen::Index best = 0;
  online_next.maxCoeff(&best);
  return reward + discount * target_next(best);
}

double lyapunov_reward(double backlog, double next_backlog, double weighted_dest_aoi,
                       double tradeoff) {
  const double drift = 0.5 * next_backlog * next_backlog - 0.5 * backlog * backlog;
  return -(drift + tradeoff * weighted_dest_aoi);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t min_fill)
    : capacity_(capacity), min_fill_(min_fill) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  data_.reserve(std::min<std::size_t>(capacity, 1u << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
  }
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, RandomStream& rng) const {
  if (size_ < min_fill_ || size_ == 0)
    throw std::logic_error("ReplayBuffer: sampled before the minimum fill");
  if (batch > size_) throw std::invalid_argument("ReplayBuffer: batch exceeds stored transitions");
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::unordered_set<std::size_t> seen;
  while (out.size() < batch) {
    const auto idx = static_cast<std::size_t>(rng.below(size_));
    if (seen.insert(idx).second) out.push_back(idx);
  }
  return out;
}

Eigen::VectorXd encode_observation(const SystemState& s, double backlog, const SystemConfig& cfg,
                                   double state_scale) {
  const std::size_t n = s.sources.size();
  Eigen::VectorXd obs(static_cast<Eigen::Index>(3 * n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    obs(static_cast<Eigen::Index>(3 * i)) = s.sources[i].theta / state_scale;
    obs(static_cast<Eigen::Index>(3 * i + 1)) = s.sources[i].x / state_scale;
    obs(static_cast<Eigen::Index>(3 * i + 2)) = s.sources[i].y / state_scale;
  }
  obs(static_cast<Eigen::Index>(3 * n)) = backlog / (cfg.gamma_max * state_scale);
  return obs;
}

namespace {

int argmax(const Eigen::VectorXd& q) {
  Eigen::Index best = 0;
  q.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

D3qnAgent::D3qnAgent(const SystemConfig& cfg, const DrlConfig& drl, std::uint64_t seed)
    : drl_(drl),
      online_([&] {
        drl.validate();
        RandomStream init(seed, "network-init");
        return QNetwork(3 * cfg.num_sources + 1, drl.hidden, num_actions(cfg.num_sources), init);
      }()),
      target_(online_),
      optimizer_(online_, drl.learning_rate, drl.rmsprop_decay, drl.rmsprop_epsilon) {}

int D3qnAgent::greedy_action(const Eigen::VectorXd& observation) const {
  return argmax(online_.forward_one(observation));
}

TrainStats D3qnAgent::train_step(const ReplayBuffer& buffer, RandomStream& rng) {
  const auto idx = buffer.sample_indices(static_cast<std::size_t>(drl_.batch_size), rng);
  const auto batch = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index dim = online_.input_size();
  Eigen::MatrixXd states(dim, batch);
  Eigen::MatrixXd next(dim, batch);
  std::vector<int> actions(idx.size());
  for (Eigen::Index j = 0; j < batch; ++j) {
    const Transition& t = buffer.at(idx[static_cast<std::size_t>(j)]);
    states.col(j) = t.state;
    next.col(j) = t.next_state;
    actions[static_cast<std::size_t>(j)] = t.action;
  }
  const Eigen::MatrixXd q_online_next = online_.forward(next);
  const Eigen::MatrixXd q_target_next = target_.forward(next);
  Eigen::VectorXd targets(batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const Transition& t = buffer.at(idx[static_cast<std::size_t>(j)]);
    targets(j) = t.terminal ? t.reward
                            : double_q_target(t.reward, drl_.discount, q_online_next.col(j),
                                              q_target_next.col(j));
  }

  Gradients grad;
  TrainStats stats;
  stats.loss = online_.loss_and_gradient(states, actions, targets, grad);
  if (!std::isfinite(stats.loss)) throw std::runtime_error("training diverged: non-finite loss");
  stats.grad_norm = gradient_norm(grad);
  if (stats.grad_norm > drl_.grad_clip) scale_gradients(grad, drl_.grad_clip / stats.grad_norm);
  optimizer_.apply(online_, grad);
  ++updates_;
  if (updates_ % drl_.target_sync == 0) {
    sync_target();
    stats.synced = true;
  }
  return stats;
}

TrainResult train_d3qn(const SystemConfig& cfg, const DrlConfig& drl, std::uint64_t seed) {
  cfg.validate();
  drl.validate();
  if (cfg.bounded()) throw ConfigError("drl training runs on the unbounded simulator");
  D3qnAgent agent(cfg, drl, seed);
  ReplayBuffer buffer(drl.replay_capacity, drl.min_replay);
  RandomStreams streams(seed);
  RandomStream sampler(seed, "replay");
  const int actions = num_actions(cfg.num_sources);
  const double total_steps = static_cast<double>(drl.episodes) * drl.steps_per_episode;
  const double decay_steps = std::max(1.0, drl.eps_decay_fraction * total_steps);

  TrainResult result;
  long global_step = 0;
  SystemState s = SystemState::zeros(cfg.num_sources);
  double backlog = 0.0;
  for (int ep = 0; ep < drl.episodes; ++ep) {
    if (drl.reset_each_episode) {
      s = SystemState::zeros(cfg.num_sources);
      backlog = 0.0;
    }
    EpisodeLog log;
    log.episode = ep;
    long losses = 0;
    for (int t = 0; t < drl.steps_per_episode; ++t, ++global_step) {
      const double frac = std::min(1.0, static_cast<double>(global_step) / decay_steps);
      const double eps = drl.eps_start + (drl.eps_end - drl.eps_start) * frac;
      const Eigen::VectorXd obs = encode_observation(s, backlog, cfg, drl.state_scale);
      int a_idx;
      if (streams.exploration.uniform() < eps) {
        a_idx = static_cast<int>(streams.exploration.below(static_cast<std::uint64_t>(actions)));
      } else {
        a_idx = agent.greedy_action(obs);
      }
      const Action a = decode_action(a_idx, cfg.num_sources);
      const StepOutcome out = step(s, a, cfg, streams);
      const double next_backlog = queue_update(backlog, a, cfg.gamma_max);
      const double cost = aoi_cost(out.next_state, cfg);
      const double reward = lyapunov_reward(backlog, next_backlog, cost, drl.tradeoff);

      Transition tr;
      tr.state = obs;
      tr.action = a_idx;
      tr.reward = reward / drl.reward_scale;
      tr.next_state = encode_observation(out.next_state, next_backlog, cfg, drl.state_scale);
      buffer.push(std::move(tr));

      log.episodic_reward += reward;
      log.mean_tx += out.tx_cost;
      log.ws_aaoi += cost;
      s = out.next_state;
      backlog = next_backlog;

      if (buffer.ready()) {
        log.mean_loss += agent.train_step(buffer, sampler).loss;
        ++losses;
      }
    }
    log.mean_tx /= drl.steps_per_episode;
    log.ws_aaoi /= drl.steps_per_episode;
    if (losses > 0) log.mean_loss /= static_cast<double>(losses);
    result.episodes.push_back(log);
  }
  result.network = agent.online();
  return result;
}

void write_training_log(std::ostream& os, const std::vector<EpisodeLog>& log) {
  os << "episode,episodic_reward,mean_tx_per_slot,ws_aaoi\n";
  os << std::setprecision(10);
  for (const auto& e : log)
    os << e.episode << ',' << e.episodic_reward << ',' << e.mean_tx << ',' << e.ws_aaoi << '\n';
}

void save_checkpoint(std::ostream& os, const QNetwork& net, const std::string& digest,
                     const DrlConfig& drl) {
  nlohmann::json header;
  header["format"] = "aoi-qnet-1";
  header["config_digest"] = digest;
  header["input_size"] = net.input_size();
  header["num_actions"] = net.num_actions();
  header["hidden"] = net.hidden_sizes();
  header["state_scale"] = drl.state_scale;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& d : net.layers()) shapes.push_back({d.weight.rows(), d.weight.cols()});
  header["layers"] = shapes;
  os << header.dump() << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& d : net.layers()) {
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c) os << d.weight(r, c) << ' ';
    }
    os << '\n';
    for (Eigen::Index r = 0; r < d.bias.size(); ++r) os << d.bias(r) << ' ';
    os << '\n';
  }
}

QNetwork load_checkpoint(std::istream& is, const std::string& expected_digest) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("format", "") != "aoi-qnet-1")
    throw std::runtime_error("checkpoint: unknown format");
  const std::string digest = header.value("config_digest", "");
  if (!expected_digest.empty() && digest != expected_digest)
    throw std::runtime_error("checkpoint: config digest " + digest + " does not match " +
                             expected_digest);
  const int input = header.at("input_size").get<int>();
  const int actions = header.at("num_actions").get<int>();
  const auto hidden = header.at("hidden").get<std::vector<int>>();
  RandomStream dummy(0, "checkpoint");
  QNetwork net(input, hidden, actions, dummy);
  const auto shapes = header.at("layers");
  if (shapes.size() != net.layers().size())
    throw std::runtime_error("checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& d = net.layers()[l];
    if (shapes[l][0].get<Eigen::Index>() != d.weight.rows() ||
        shapes[l][1].get<Eigen::Index>() != d.weight.cols())
      throw std::runtime_error("checkpoint: layer shape mismatch");
    for (Eigen::Index r = 0; r < d.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < d.weight.cols(); ++c)
        if (!(is >> d.weight(r, c))) throw std::runtime_error("checkpoint: truncated weights");
    for (Eigen::Index r = 0; r < d.bias.size(); ++r)
      if (!(is >> d.bias(r))) throw std::runtime_error("checkpoint: truncated biases");
  }
  return net;
}

Action DrlPolicy::decide(const SystemState& s) const {
  const Eigen::VectorXd obs = encode_observation(s, backlog_, cfg_, scale_);
  return decode_action(argmax(net_.forward_one(obs)), cfg_.num_sources);
}

void DrlPolicy::observe(Action a) { backlog_ = queue_update(backlog_, a, cfg_.gamma_max); }

}  // namespace aoi

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "socnav/perspective_shift.hpp"

namespace socnav {

struct PolicyConfig {
  std::array<int, 2> hidden{256, 128};
  double gamma = 0.95;
  int replay_capacity = 50000;
  int batch = 64;
  int target_refresh = 500;
  double eps_start = 1.0;
  double eps_end = 0.05;
  /// Share of the episode budget over which ε is annealed.
  double eps_fraction = 1.0 / 3.0;
  int episodes = 2000;
  double lr = 5e-4;
  /// Transitions collected before the first update.
  int warmup = 1000;
  int update_every = 1;
  /// Scale on the output layer initialization.
  double output_init_scale = 0.1;
  int max_plan_length = kDefaultMaxPlanLength;
};

/// Own belief and influence estimate, flattened side by side (1 × 2·N·K).
nn::RowVector policy_input(const FactoredBelief& own, const FactoredBelief& other);

class QNetwork {
 public:
  struct Cache {
    nn::Dense::Cache d1, d2, d3;
    nn::ReluCache r1, r2;
  };

  QNetwork() = default;
  QNetwork(int input_dim, const PolicyConfig& config, std::uint64_t init_seed);

  /// B × input → B × |Action|.
  nn::Matrix forward(const nn::Matrix& inputs, Cache* cache = nullptr) const;
  void backward(const nn::Matrix& dq, const Cache& cache);
  nn::RowVector q_values(const nn::RowVector& input) const;

  nn::ParameterList parameters();
  int input_dim() const { return l1_.in(); }

  void save(const std::string& path, const nlohmann::json& metadata = {}) const;
  static QNetwork load(const std::string& path);

 private:
  nn::Dense l1_, l2_, l3_;
};

/// Uniform action with probability ε, otherwise the first maximizing index.
Action select_action(const nn::RowVector& q, double epsilon, Rng& rng);

struct ReplayItem {
  nn::RowVector input;
  Action action = Action::TurnLeft;
  double reward = 0.0;
  nn::RowVector next_input;
  bool terminal = false;
};

/// Fixed-capacity FIFO buffer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(ReplayItem item);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Items in insertion order, oldest first.
  const ReplayItem& at(std::size_t i) const;
  /// Uniform draw with replacement.
  std::vector<const ReplayItem*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<ReplayItem> items_;
};

/// Regression targets r + γ·max Q_target(next), or r for terminal items.
Eigen::VectorXd dqn_targets(const std::vector<const ReplayItem*>& batch, const QNetwork& target, double gamma);

/// Mean squared TD error on the taken actions; accumulates gradients into
/// `online` when `backward` is set.
double dqn_loss(const std::vector<const ReplayItem*>& batch, QNetwork& online, const QNetwork& target, double gamma,
                bool backward);

/// Online network, frozen target copy and optimizer.
class DqnLearner {
 public:
  DqnLearner(QNetwork online, const PolicyConfig& config);

  /// One gradient step; refreshes the target every `target_refresh` updates.
  /// Throws std::runtime_error on a non-finite loss.
  double update(const std::vector<const ReplayItem*>& batch);

  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  long updates() const { return updates_; }

 private:
  PolicyConfig config_;
  QNetwork online_;
  QNetwork target_;
  nn::Adam optimizer_;
  long updates_ = 0;
};

double epsilon_at(const PolicyConfig& config, int episode);

struct EpisodeRecord {
  int episode = 0;
  double episode_return = 0.0;
  int steps = 0;
  bool terminated = false;
  double epsilon = 0.0;
  int fallbacks = 0;
};

struct PolicyRun {
  QNetwork network;
  std::vector<EpisodeRecord> curve;
};

/// Trains one DQN with a frozen world model under `condition`. Episode maps
/// are drawn from `seed`, so every condition sees the same map sequence for
/// the same seed.
PolicyRun train_policy(const EnvConfig& env, const WorldModel& model, InfluenceSource condition, std::uint64_t seed,
                       const PolicyConfig& config,
                       const std::function<void(const EpisodeRecord&)>& on_episode = {});

}  // namespace socnav

#include "socnav/dqn.hpp"

#include <cmath>
#include <stdexcept>

#include "socnav/checkpoint.hpp"

namespace socnav {

using nn::Matrix;

nn::RowVector policy_input(const FactoredBelief& own, const FactoredBelief& other) {
  const nn::RowVector a = own.flatten();
  const nn::RowVector b = other.flatten();
  nn::RowVector out(a.size() + b.size());
  out << a, b;
  return out;
}

QNetwork::QNetwork(int input_dim, const PolicyConfig& config, std::uint64_t init_seed)
    : l1_("q.fc1", input_dim, config.hidden[0]),
      l2_("q.fc2", config.hidden[0], config.hidden[1]),
      l3_("q.out", config.hidden[1], kNumActions) {
  Rng rng(init_seed);
  l1_.init(rng, nn::Init::HeUniform);
  l2_.init(rng, nn::Init::HeUniform);
  l3_.init(rng, nn::Init::XavierUniform, config.output_init_scale);
}

Matrix QNetwork::forward(const Matrix& inputs, Cache* c) const {
  Matrix h = nn::relu(l1_.forward(inputs, c ? &c->d1 : nullptr), c ? &c->r1 : nullptr);
  h = nn::relu(l2_.forward(h, c ? &c->d2 : nullptr), c ? &c->r2 : nullptr);
  return l3_.forward(h, c ? &c->d3 : nullptr);
}

void QNetwork::backward(const Matrix& dq, const Cache& c) {
  Matrix d = l3_.backward(dq, c.d3);
  d = l2_.backward(nn::relu_backward(d, c.r2), c.d2);
  l1_.backward(nn::relu_backward(d, c.r1), c.d1);
}

nn::RowVector QNetwork::q_values(const nn::RowVector& input) const {
  if (input.size() != input_dim()) throw std::invalid_argument("policy input has the wrong width");
  return forward(input).row(0);
}

nn::ParameterList QNetwork::parameters() {
  nn::ParameterList out = l1_.parameters();
  for (auto* p : l2_.parameters()) out.push_back(p);
  for (auto* p : l3_.parameters()) out.push_back(p);
  return out;
}

namespace {
constexpr std::uint32_t kPolicyMagic = io::make_tag("SNQN");
constexpr std::uint32_t kPolicyVersion = 1;
}  // namespace

void QNetwork::save(const std::string& path, const nlohmann::json& metadata) const {
  auto& self = const_cast<QNetwork&>(*this);
  nlohmann::json header = {{"input_dim", input_dim()},
                           {"hidden", {l1_.out(), l2_.out()}},
                           {"metadata", metadata}};
  write_checkpoint(path, kPolicyMagic, kPolicyVersion, header, self.parameters());
}

QNetwork QNetwork::load(const std::string& path) {
  io::FrameReader reader(path, kPolicyMagic, kPolicyVersion);
  const nlohmann::json header = read_checkpoint_header(reader);
  PolicyConfig config;
  int input_dim = 0;
  try {
    input_dim = header.at("input_dim").get<int>();
    config.hidden = header.at("hidden").get<std::array<int, 2>>();
  } catch (const nlohmann::json::exception& e) {
    throw io::MalformedInputError(std::string("bad policy header: ") + e.what());
  }
  QNetwork net(input_dim, config, 0);
  read_checkpoint_params(reader, net.parameters());
  return net;
}

Action select_action(const nn::RowVector& q, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon outside [0, 1]");
  if (q.size() != kNumActions) throw std::invalid_argument("expected one value per action");
  if (epsilon > 0.0 && rng.uniform() < epsilon) return static_cast<Action>(rng.uniform_index(kNumActions));
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i) {
    if (q(i) > q(best)) best = i;
  }
  return static_cast<Action>(best);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(ReplayItem item) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(item));
  } else {
    items_[head_] = std::move(item);
    head_ = (head_ + 1) % capacity_;
  }
}

const ReplayItem& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw std::out_of_range("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

std::vector<const ReplayItem*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::vector<const ReplayItem*> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[rng.uniform_index(items_.size())]);
  return out;
}

namespace {

Matrix stack_inputs(const std::vector<const ReplayItem*>& batch, bool next) {
  const auto width = (next ? batch.front()->next_input : batch.front()->input).size();
  Matrix m(static_cast<Eigen::Index>(batch.size()), width);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = next ? batch[i]->next_input : batch[i]->input;
  }
  return m;
}

}  // namespace

Eigen::VectorXd dqn_targets(const std::vector<const ReplayItem*>& batch, const QNetwork& target, double gamma) {
  if (batch.empty()) throw std::invalid_argument("empty update batch");
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma outside [0, 1)");
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  Matrix next_q;
  if (gamma > 0.0) next_q = target.forward(stack_inputs(batch, true));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    y(r) = batch[i]->reward;
    if (!batch[i]->terminal && gamma > 0.0) y(r) += gamma * next_q.row(r).maxCoeff();
  }
  return y;
}

double dqn_loss(const std::vector<const ReplayItem*>& batch, QNetwork& online, const QNetwork& target, double gamma,
                bool backward) {
  const Eigen::VectorXd y = dqn_targets(batch, target, gamma);
  QNetwork::Cache cache;
  const Matrix q = online.forward(stack_inputs(batch, false), &cache);
  const auto b = static_cast<double>(batch.size());
  Matrix dq = Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const int a = static_cast<int>(batch[static_cast<std::size_t>(i)]->action);
    const double err = q(i, a) - y(i);
    loss += err * err;
    dq(i, a) = 2.0 * err / b;
  }
  loss /= b;
  if (backward) online.backward(dq, cache);
  return loss;
}

DqnLearner::DqnLearner(QNetwork online, const PolicyConfig& config)
    : config_(config), online_(std::move(online)), target_(online_) {
  optimizer_ = nn::Adam(online_.parameters(), config_.lr);
}

double DqnLearner::update(const std::vector<const ReplayItem*>& batch) {
  const nn::ParameterList params = online_.parameters();
  nn::zero_grad(params);
  const double loss = dqn_loss(batch, online_, target_, config_.gamma, true);
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite TD loss at update " + std::to_string(updates_));
  optimizer_.step(params);
  ++updates_;
  if (updates_ % config_.target_refresh == 0) target_ = online_;
  return loss;
}

double epsilon_at(const PolicyConfig& config, int episode) {
  const double span = config.eps_fraction * config.episodes;
  const double frac = span <= 0.0 ? 1.0 : std::min(1.0, episode / span);
  return config.eps_start + (config.eps_end - config.eps_start) * frac;
}

PolicyRun train_policy(const EnvConfig& env_config, const WorldModel& model, InfluenceSource condition,
                       std::uint64_t seed, const PolicyConfig& config,
                       const std::function<void(const EpisodeRecord&)>& on_episode) {
  if (config.episodes <= 0 || config.batch <= 0 || config.target_refresh <= 0 || config.update_every <= 0) {
    throw std::invalid_argument("invalid policy schedule");
  }
  if (env_config.map.view_size != model.config().view_size) {
    throw std::invalid_argument("world model and environment disagree on the view size");
  }
  const int input_dim = 2 * model.config().latent_size();
  DqnLearner learner(QNetwork(input_dim, config, derive_seed(seed, 0x1417)), config);
  ReplayBuffer replay(static_cast<std::size_t>(config.replay_capacity));
  Rng act_rng(derive_seed(seed, 0xAC7));
  Rng influence_rng(derive_seed(seed, 0x1F1));
  Rng replay_rng(derive_seed(seed, 0x4E9));
  Environment env(env_config);

  auto make_input = [&](const EgoObservation& obs, int& fallbacks) {
    const FactoredBelief own = model.encode(obs);
    const InfluenceEstimate infl = estimate_influence(condition, {&obs, &own, &env.state()}, model, influence_rng,
                                                      config.max_plan_length);
    fallbacks += infl.fallback ? 1 : 0;
    return policy_input(own, infl.belief);
  };

  PolicyRun run;
  run.curve.reserve(static_cast<std::size_t>(config.episodes));
  long transitions = 0;
  for (int ep = 0; ep < config.episodes; ++ep) {
    EpisodeRecord rec;
    rec.episode = ep;
    rec.epsilon = epsilon_at(config, ep);
    EgoObservation obs = env.reset(derive_seed(seed, 0x100000ULL + static_cast<std::uint64_t>(ep)));
    nn::RowVector input = make_input(obs, rec.fallbacks);
    while (!env.done()) {
      const Action a = select_action(learner.online().q_values(input), rec.epsilon, act_rng);
      const StepOutcome out = env.step(a);
      nn::RowVector next = make_input(out.observation, rec.fallbacks);
      replay.push(ReplayItem{input, a, out.reward, next, out.terminated});
      input = std::move(next);
      rec.episode_return += out.reward;
      ++rec.steps;
      rec.terminated = out.terminated;
      ++transitions;
      if (transitions >= std::max<long>(config.warmup, config.batch) && transitions % config.update_every == 0) {
        learner.update(replay.sample(static_cast<std::size_t>(config.batch), replay_rng));
      }
    }
    if (on_episode) on_episode(rec);
    run.curve.push_back(rec);
  }
  run.network = learner.online();
  return run;
}

}  // namespace socnav

#include <doctest.h>

#include "socnav/dqn.hpp"
#include "temp_dir.hpp"

using namespace socnav;

namespace {

PolicyConfig tiny_policy() {
  PolicyConfig c;
  c.hidden = {16, 8};
  c.batch = 8;
  c.warmup = 20;
  c.target_refresh = 5;
  c.episodes = 6;
  c.replay_capacity = 200;
  return c;
}

nn::RowVector random_row(int n, Rng& rng) {
  nn::RowVector r(n);
  for (int i = 0; i < n; ++i) r(i) = rng.uniform();
  return r;
}

std::vector<ReplayItem> random_items(int n, int dim, Rng& rng) {
  std::vector<ReplayItem> items;
  for (int i = 0; i < n; ++i) {
    items.push_back({random_row(dim, rng), static_cast<Action>(rng.uniform_int(0, 2)), rng.uniform(-1, 1),
                     random_row(dim, rng), rng.bernoulli(0.3)});
  }
  return items;
}

std::vector<const ReplayItem*> pointers(const std::vector<ReplayItem>& items) {
  std::vector<const ReplayItem*> out;
  for (const ReplayItem& it : items) out.push_back(&it);
  return out;
}

}  // namespace

TEST_CASE("Q-network shape, purity and small initial values") {
  const QNetwork q(128, PolicyConfig{}, 4);
  CHECK(q.input_dim() == 128);
  Rng rng(2);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const FactoredBelief a = sample_flat_dirichlet(8, 8, rng), b = sample_flat_dirichlet(8, 8, rng);
    const nn::RowVector x = policy_input(a, b);
    REQUIRE(x.size() == 128);
    CHECK(x.head(64) == a.flatten());
    CHECK(x.tail(64) == b.flatten());
    const nn::RowVector v = q.q_values(x);
    REQUIRE(v.size() == 3);
    CHECK(q.q_values(x) == v);
    worst = std::max(worst, v.cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1.0);
}

TEST_CASE("select_action: greedy tie-break and exploration frequency") {
  Rng rng(1);
  nn::RowVector q(3);
  q << 0.2, 0.7, 0.7;
  CHECK(select_action(q, 0.0, rng) == Action::TurnRight);
  q << 0.9, 0.9, 0.9;
  CHECK(select_action(q, 0.0, rng) == Action::TurnLeft);
  q << -1.0, -2.0, 3.0;
  CHECK(select_action(q, 0.0, rng) == Action::Forward);

  std::array<int, 3> counts{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(q, 1.0, rng))];
  const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
  for (int c : counts) CHECK(std::abs(c - n / 3.0) <= 3 * sigma);
}

TEST_CASE("TD targets: terminal items and gamma zero") {
  Rng rng(3);
  const QNetwork target(6, tiny_policy(), 2);
  std::vector<ReplayItem> items = random_items(12, 6, rng);
  const auto batch = pointers(items);
  const Eigen::VectorXd y = dqn_targets(batch, target, 0.9);
  const Eigen::VectorXd y0 = dqn_targets(batch, target, 0.0);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    CHECK(y0(e) == items[i].reward);
    if (items[i].terminal) {
      CHECK(y(e) == items[i].reward);
    } else {
      CHECK(y(e) == doctest::Approx(items[i].reward + 0.9 * target.q_values(items[i].next_input).maxCoeff())
                        .epsilon(1e-12));
    }
  }
}

TEST_CASE("TD loss gradient matches central differences") {
  Rng rng(11);
  QNetwork online(10, tiny_policy(), 5);
  const QNetwork target(10, tiny_policy(), 6);
  std::vector<ReplayItem> items = random_items(9, 10, rng);
  const auto batch = pointers(items);
  nn::ParameterList params = online.parameters();
  nn::zero_grad(params);
  dqn_loss(batch, online, target, 0.95, true);
  int checked = 0;
  double worst = 0.0;
  for (nn::Parameter* p : params) {
    for (int t = 0; t < 4; ++t) {
      const auto i = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(p->value.size())));
      const double old = p->value.data()[i], h = 1e-6;
      p->value.data()[i] = old + h;
      const double lp = dqn_loss(batch, online, target, 0.95, false);
      p->value.data()[i] = old - h;
      const double lm = dqn_loss(batch, online, target, 0.95, false);
      p->value.data()[i] = old;
      const double fd = (lp - lm) / (2 * h), an = p->grad.data()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)));
      ++checked;
    }
  }
  CHECK(checked >= 16);
  CHECK(worst <= 1e-4);
}

TEST_CASE("replay buffer is FIFO with a fixed capacity") {
  ReplayBuffer buf(4);
  Rng rng(1);
  CHECK_THROWS_AS(buf.sample(3, rng), std::logic_error);
  for (int i = 0; i < 7; ++i) {
    ReplayItem it;
    it.reward = i;
    buf.push(it);
  }
  CHECK(buf.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(buf.at(i).reward == 3.0 + static_cast<double>(i));
  const auto s = buf.sample(50, rng);
  CHECK(s.size() == 50);
  for (const ReplayItem* p : s) CHECK(p->reward >= 3.0);
  CHECK_THROWS_AS(buf.at(4), std::out_of_range);
  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("target network stays frozen between refreshes") {
  Rng rng(8);
  PolicyConfig cfg = tiny_policy();
  cfg.target_refresh = 3;
  DqnLearner learner(QNetwork(6, cfg, 1), cfg);
  std::vector<ReplayItem> items = random_items(8, 6, rng);
  const auto batch = pointers(items);
  const nn::RowVector probe = random_row(6, rng);
  const nn::RowVector before = learner.target().q_values(probe);
  learner.update(batch);
  learner.update(batch);
  CHECK(learner.target().q_values(probe) == before);
  CHECK(learner.online().q_values(probe) != before);
  learner.update(batch);
  CHECK(learner.updates() == 3);
  CHECK(learner.target().q_values(probe) == learner.online().q_values(probe));
}

TEST_CASE("epsilon schedule") {
  PolicyConfig c;
  c.episodes = 300;
  CHECK(epsilon_at(c, 0) == 1.0);
  CHECK(epsilon_at(c, 50) == doctest::Approx(1.0 - 0.95 * 0.5));
  CHECK(epsilon_at(c, 100) == doctest::Approx(0.05));
  CHECK(epsilon_at(c, 299) == doctest::Approx(0.05));
}

TEST_CASE("Q-network checkpoints round-trip") {
  test::TempDir dir;
  const QNetwork q(12, tiny_policy(), 3);
  const std::string path = dir.file("q.qnet");
  q.save(path, {{"condition", "shift"}});
  const QNetwork back = QNetwork::load(path);
  Rng rng(2);
  const nn::RowVector x = random_row(12, rng);
  CHECK(back.q_values(x) == q.q_values(x));
  CHECK_THROWS(QNetwork::load(dir.file("missing.qnet")));
}

TEST_CASE("policy training is reproducible for a seed") {
  WorldModelConfig wc;
  wc.channels = {4, 6, 6};
  wc.factors = 3;
  wc.values = 4;
  wc.action_dim = 3;
  wc.forward_hidden = 8;
  wc.inverse_hidden = 8;
  const WorldModel model(wc, 2);
  const EnvConfig env;
  for (InfluenceSource cond :
       {InfluenceSource::PerspectiveShift, InfluenceSource::UniformRandom, InfluenceSource::PerfectInformation}) {
    CAPTURE(condition_name(cond));
    int seen = 0;
    const PolicyRun a = train_policy(env, model, cond, 3, tiny_policy(), [&](const EpisodeRecord&) { ++seen; });
    const PolicyRun b = train_policy(env, model, cond, 3, tiny_policy());
    REQUIRE(a.curve.size() == 6);
    CHECK(seen == 6);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].episode == static_cast<int>(i));
      CHECK(a.curve[i].episode_return == b.curve[i].episode_return);
      CHECK(a.curve[i].steps == b.curve[i].steps);
      CHECK(a.curve[i].steps >= 1);
    }
    if (cond != InfluenceSource::PerspectiveShift) {
      for (const EpisodeRecord& r : a.curve) CHECK(r.fallbacks == 0);
    }
  }
}

#include <doctest.h>

#include "socnav/gridworld.hpp"
#include "socnav/perspective_shift.hpp"

using namespace socnav;

namespace {

bool window_open(const EgoObservation& obs, Cell c) {
  const int v = obs.view_size;
  if (c.row < 0 || c.col < 0 || c.row >= v || c.col >= v) return false;
  const Channel ch = obs.at(c.row, c.col);
  return ch == Channel::Empty || ch == Channel::Goal || ch == Channel::Poi;
}

Pose simulate(const EgoObservation& obs, Pose p, int a) {
  static const int dr[] = {-1, 0, 1, 0}, dc[] = {0, 1, 0, -1};
  const int h = static_cast<int>(p.heading);
  if (a == 0) return {p.cell, static_cast<Heading>((h + 3) % 4)};
  if (a == 1) return {p.cell, static_cast<Heading>((h + 1) % 4)};
  const Cell n{p.cell.row + dr[h], p.cell.col + dc[h]};
  return window_open(obs, n) ? Pose{n, p.heading} : p;
}

// Enumerates every action string of length 0, 1, 2, ... in lexicographic
// order; the first that ends at `target` is the expected plan.
std::optional<std::vector<int>> brute_force_plan(const EgoObservation& obs, Pose target, int max_len) {
  const Pose start{{obs.view_size - 1, obs.view_size / 2}, Heading::North};
  for (int len = 0; len <= max_len; ++len) {
    std::vector<int> seq(static_cast<std::size_t>(len), 0);
    while (true) {
      Pose p = start;
      for (int a : seq) p = simulate(obs, p, a);
      if (p == target) return seq;
      int i = len - 1;
      while (i >= 0 && seq[static_cast<std::size_t>(i)] == 2) seq[static_cast<std::size_t>(i--)] = 0;
      if (i < 0) break;
      ++seq[static_cast<std::size_t>(i)];
    }
  }
  return std::nullopt;
}

EgoObservation random_window(Rng& rng, double wall_rate) {
  EgoObservation obs(5);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      const double u = rng.uniform();
      obs.set(r, c, u < wall_rate ? Channel::Wall : u < wall_rate + 0.1 ? Channel::OutOfView : Channel::Empty);
    }
  }
  obs.set(4, 2, Channel::Empty);
  int r = 0, c = 0;
  do {
    r = rng.uniform_int(0, 4);
    c = rng.uniform_int(0, 4);
  } while (r == 4 && c == 2);
  obs.set(r, c, Channel::Poi);
  obs.poi_heading = static_cast<Heading>(rng.uniform_int(0, 3));
  return obs;
}

const WorldModel& model() {
  static const WorldModel m(WorldModelConfig{}, 3);
  return m;
}

}  // namespace

TEST_CASE("observed POI pose reads the window") {
  EgoObservation obs(5);
  CHECK_FALSE(observed_poi_pose(obs).has_value());
  obs.set(1, 3, Channel::Poi);
  obs.poi_heading = Heading::West;
  const auto pose = observed_poi_pose(obs);
  REQUIRE(pose.has_value());
  CHECK(*pose == ObservedPose{1, 3, Heading::West});
  CHECK(window_viewer_pose(5) == Pose{{4, 2}, Heading::North});
}

TEST_CASE("imagined plans: worked examples") {
  EgoObservation obs(5);
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) obs.set(r, c, Channel::Empty);
  }
  SUBCASE("one step ahead, same heading") {
    obs.set(3, 2, Channel::Poi);
    const ImaginedPlan p = plan_imagined_actions(obs, {3, 2, Heading::North});
    CHECK_FALSE(p.blocked);
    CHECK(p.actions == std::vector<Action>{Action::Forward});
  }
  SUBCASE("one step ahead, facing the viewer") {
    obs.set(3, 2, Channel::Poi);
    const ImaginedPlan p = plan_imagined_actions(obs, {3, 2, Heading::South});
    CHECK(p.actions == std::vector<Action>{Action::Forward, Action::TurnLeft, Action::TurnLeft});
  }
  SUBCASE("off to the right") {
    obs.set(4, 4, Channel::Poi);
    const ImaginedPlan p = plan_imagined_actions(obs, {4, 4, Heading::East});
    CHECK(p.actions == std::vector<Action>{Action::TurnRight, Action::Forward, Action::Forward});
  }
  SUBCASE("two ahead, same heading") {
    obs.set(2, 2, Channel::Poi);
    CHECK(plan_imagined_actions(obs, {2, 2, Heading::North}).actions ==
          std::vector<Action>{Action::Forward, Action::Forward});
  }
  SUBCASE("own pose needs no actions and leaves the belief unchanged") {
    const ImaginedPlan p = plan_imagined_actions(obs, {4, 2, Heading::North});
    CHECK_FALSE(p.blocked);
    CHECK(p.actions.empty());
    const FactoredBelief b = model().encode(obs);
    const InfluenceEstimate e = apply_perspective_shift(b, obs, {4, 2, Heading::North}, model());
    CHECK(e.belief == b);
    CHECK(e.source == InfluenceSource::PerspectiveShift);
    REQUIRE(e.imagined_plan.has_value());
    CHECK(e.imagined_plan->empty());
  }
  SUBCASE("walled in") {
    obs.set(1, 1, Channel::Poi);
    for (Cell c : {Cell{0, 1}, Cell{2, 1}, Cell{1, 0}, Cell{1, 2}}) obs.set(c.row, c.col, Channel::Wall);
    const ImaginedPlan p = plan_imagined_actions(obs, {1, 1, Heading::North});
    CHECK(p.blocked);
    CHECK(p.actions.empty());
  }
  SUBCASE("plan longer than the cap") {
    obs.set(0, 0, Channel::Poi);
    CHECK_FALSE(plan_imagined_actions(obs, {0, 0, Heading::South}).blocked);
    CHECK(plan_imagined_actions(obs, {0, 0, Heading::South}, 3).blocked);
  }
  SUBCASE("target must be a visible POI cell") {
    CHECK_THROWS_AS(plan_imagined_actions(obs, {2, 2, Heading::North}), std::invalid_argument);
    CHECK_THROWS_AS(plan_imagined_actions(obs, {7, 2, Heading::North}), std::invalid_argument);
  }
}

TEST_CASE("imagined plans equal the lexicographically first shortest plan by exhaustive search") {
  Rng rng(31);
  int compared = 0, blocked = 0;
  for (int i = 0; i < 600; ++i) {
    const EgoObservation obs = random_window(rng, 0.3);
    const ObservedPose target = *observed_poi_pose(obs);
    const Pose goal{{target.rel_row, target.rel_col}, target.heading};
    const ImaginedPlan plan = plan_imagined_actions(obs, target, 9);
    const auto expected = brute_force_plan(obs, goal, 9);
    if (!expected) {
      CHECK(plan.blocked);
      ++blocked;
      continue;
    }
    REQUIRE_FALSE(plan.blocked);
    std::vector<int> got;
    for (Action a : plan.actions) got.push_back(static_cast<int>(a));
    CHECK(got == *expected);
    ++compared;
  }
  CHECK(compared > 300);
  CHECK(blocked > 10);
}

TEST_CASE("perspective shift composes the forward model along the plan") {
  Rng rng(5);
  int shifted = 0;
  for (int i = 0; i < 200; ++i) {
    const EgoObservation obs = random_window(rng, 0.2);
    const FactoredBelief q = model().encode(obs);
    const ObservedPose target = *observed_poi_pose(obs);
    const InfluenceEstimate e = apply_perspective_shift(q, obs, target, model());
    CHECK(e.belief.is_normalized(1e-9));
    const ImaginedPlan plan = plan_imagined_actions(obs, target);
    if (plan.blocked) {
      CHECK(e.fallback);
      CHECK(e.source == InfluenceSource::UniformRandom);
      CHECK_FALSE(e.imagined_plan.has_value());
      CHECK(e.belief == FactoredBelief::uniform(8, 8));
      continue;
    }
    FactoredBelief expected = q;
    for (Action a : plan.actions) expected = model().forward_predict(expected, a);
    CHECK(e.belief == expected);
    CHECK(e.source == InfluenceSource::PerspectiveShift);
    CHECK_FALSE(e.fallback);
    REQUIRE(e.imagined_plan.has_value());
    CHECK(*e.imagined_plan == plan.actions);
    ++shifted;
  }
  CHECK(shifted > 100);
}

TEST_CASE("estimate_influence: conditions") {
  const WorldState s = generate_map(4, MapConfig{});
  const EgoObservation obs = render_observation(s, s.agent, 5);
  const FactoredBelief own = model().encode(obs);
  Rng rng(1);

  SUBCASE("perfect information encodes the POI's own view") {
    const InfluenceContext ctx{&obs, &own, &s};
    const InfluenceEstimate e = estimate_influence(InfluenceSource::PerfectInformation, ctx, model(), rng);
    CHECK(e.belief == model().encode(render_observation(s, s.poi, 5)));
    CHECK(e.source == InfluenceSource::PerfectInformation);
    CHECK_THROWS_AS(estimate_influence(InfluenceSource::PerfectInformation, {&obs, &own, nullptr}, model(), rng),
                    std::logic_error);
  }
  SUBCASE("an unseen POI falls back to the flat belief") {
    EgoObservation hidden(5);
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 5; ++c) hidden.set(r, c, Channel::Empty);
    }
    const InfluenceContext ctx{&hidden, &own, &s};
    const InfluenceEstimate e = estimate_influence(InfluenceSource::PerspectiveShift, ctx, model(), rng);
    CHECK(e.fallback);
    CHECK(e.source == InfluenceSource::UniformRandom);
    CHECK(e.belief == FactoredBelief::uniform(8, 8));
  }
  SUBCASE("random draws do not depend on the observation") {
    Rng a(9), b(9);
    const InfluenceEstimate x = estimate_influence(InfluenceSource::UniformRandom, {&obs, &own, &s}, model(), a);
    const InfluenceEstimate y = estimate_influence(InfluenceSource::UniformRandom, {}, model(), b);
    CHECK(x.belief == y.belief);
    CHECK(x.belief.is_normalized(1e-12));
    CHECK(x.belief.factors.minCoeff() > 0.0);
  }
  CHECK(parse_condition("shift") == InfluenceSource::PerspectiveShift);
  CHECK(parse_condition("random") == InfluenceSource::UniformRandom);
  CHECK(parse_condition("perfect") == InfluenceSource::PerfectInformation);
  CHECK_THROWS_AS(parse_condition("oracle"), std::invalid_argument);
}

TEST_CASE("flat Dirichlet marginals are Beta(1, K-1)") {
  Rng rng(77);
  const int n = 20000, k = 8;
  double sum = 0.0, below = 0.0;
  for (int i = 0; i < n; ++i) {
    const FactoredBelief b = sample_flat_dirichlet(1, k, rng);
    REQUIRE(b.is_normalized(1e-12));
    sum += b.factors(0, 3);
    below += b.factors(0, 5) < 0.1;
  }
  const double var = (k - 1.0) / (k * k * (k + 1.0));
  CHECK(std::abs(sum / n - 1.0 / k) < 4.0 * std::sqrt(var / n));
  const double p = 1.0 - std::pow(0.9, k - 1);
  CHECK(std::abs(below / n - p) < 4.0 * std::sqrt(p * (1 - p) / n));
}

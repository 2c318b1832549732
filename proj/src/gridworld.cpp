#include "socnav/gridworld.hpp"

#include <array>
#include <deque>
#include <sstream>

namespace socnav {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::TurnLeft: return "TurnLeft";
    case Action::TurnRight: return "TurnRight";
    case Action::Forward: return "Forward";
  }
  return "?";
}

std::string_view to_string(Heading h) {
  switch (h) {
    case Heading::North: return "North";
    case Heading::East: return "East";
    case Heading::South: return "South";
    case Heading::West: return "West";
  }
  return "?";
}

Cell heading_delta(Heading h) {
  switch (h) {
    case Heading::North: return {-1, 0};
    case Heading::East: return {0, 1};
    case Heading::South: return {1, 0};
    case Heading::West: return {0, -1};
  }
  return {0, 0};
}

std::optional<Cell> EgoObservation::poi_cell() const {
  for (int r = 0; r < view_size; ++r) {
    for (int c = 0; c < view_size; ++c) {
      if (at(r, c) == Channel::Poi) return Cell{r, c};
    }
  }
  return std::nullopt;
}

std::vector<int> distance_field(const Grid& grid, Cell source) {
  std::vector<int> dist(static_cast<std::size_t>(grid.height() * grid.width()), -1);
  if (grid.is_wall(source)) return dist;
  auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row * grid.width() + c.col); };
  std::deque<Cell> frontier{source};
  dist[idx(source)] = 0;
  while (!frontier.empty()) {
    const Cell cur = frontier.front();
    frontier.pop_front();
    for (int h = 0; h < 4; ++h) {
      const Cell next = cur + heading_delta(static_cast<Heading>(h));
      if (grid.is_wall(next) || dist[idx(next)] >= 0) continue;
      dist[idx(next)] = dist[idx(cur)] + 1;
      frontier.push_back(next);
    }
  }
  return dist;
}

WorldState generate_map(std::uint64_t seed, const MapConfig& config) {
  const int size = config.size;
  if (size < 5 || size % 2 == 0) {
    throw std::invalid_argument("map size must be odd and at least 5");
  }
  auto idx = [size](Cell c) { return static_cast<std::size_t>(c.row * size + c.col); };

  for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    Grid grid(size, size);
    std::vector<Cell> open;
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const bool border = r == 0 || c == 0 || r == size - 1 || c == size - 1;
        if (border || rng.bernoulli(config.wall_density)) {
          grid.set({r, c}, GridCell::Wall);
        } else {
          open.push_back({r, c});
        }
      }
    }
    if (open.size() < 3) continue;

    const Cell poi = open[rng.uniform_index(open.size())];
    const std::vector<int> dist = distance_field(grid, poi);

    std::vector<Cell> goals;
    std::vector<Cell> starts;
    for (const Cell c : open) {
      const int d = dist[idx(c)];
      if (d >= config.min_goal_distance) goals.push_back(c);
      if (d >= 1 && d <= config.max_start_distance) starts.push_back(c);
    }
    if (goals.empty() || starts.empty()) continue;
    const Cell goal = goals[rng.uniform_index(goals.size())];
    // Start and goal sets are disjoint whenever max_start < min_goal.
    std::erase(starts, goal);
    if (starts.empty()) continue;
    const Cell agent = starts[rng.uniform_index(starts.size())];

    WorldState state;
    grid.set(goal, GridCell::Goal);
    state.grid = std::move(grid);
    state.goal = goal;
    state.poi = {poi, static_cast<Heading>(rng.uniform_index(4))};
    state.agent = {agent, static_cast<Heading>(rng.uniform_index(4))};
    state.step_count = 0;
    return state;
  }
  throw MapGenerationError("no solvable layout within " + std::to_string(config.max_attempts) +
                           " attempts");
}

Cell window_to_world(Pose pose, int view_size, int row, int col) {
  const int forward = view_size - 1 - row;
  const int lateral = col - view_size / 2;
  const Cell ahead = heading_delta(pose.heading);
  const Cell right = heading_delta(turn_right(pose.heading));
  return {pose.cell.row + forward * ahead.row + lateral * right.row,
          pose.cell.col + forward * ahead.col + lateral * right.col};
}

namespace {

// Doubled egocentric coordinates: x = 2·forward, y = 2·lateral.
struct Vec2 {
  long x;
  long y;
};

long cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Open angular cone subtended by a wall square, bounded by its extreme corners.
struct Shadow {
  Vec2 cw;
  Vec2 ccw;
  bool covers(Vec2 p) const { return cross(cw, p) > 0 && cross(p, ccw) > 0; }
};

Shadow shadow_of(int forward, int lateral) {
  const std::array<Vec2, 4> corners{Vec2{2L * forward - 1, 2L * lateral - 1},
                                    Vec2{2L * forward - 1, 2L * lateral + 1},
                                    Vec2{2L * forward + 1, 2L * lateral - 1},
                                    Vec2{2L * forward + 1, 2L * lateral + 1}};
  Shadow s{corners[0], corners[0]};
  for (const Vec2 a : corners) {
    bool is_cw = true;
    bool is_ccw = true;
    for (const Vec2 c : corners) {
      if (cross(a, c) < 0) is_cw = false;
      if (cross(c, a) < 0) is_ccw = false;
    }
    if (is_cw) s.cw = a;
    if (is_ccw) s.ccw = a;
  }
  return s;
}

}  // namespace

std::vector<bool> visibility_mask(const Grid& grid, Pose pose, int view_size) {
  std::vector<bool> visible(static_cast<std::size_t>(view_size * view_size), false);
  const int half = view_size / 2;
  const int max_ring = std::max(view_size - 1, half);
  std::vector<Shadow> shadows;

  for (int ring = 0; ring <= max_ring; ++ring) {
    std::vector<Shadow> ring_shadows;
    for (int row = 0; row < view_size; ++row) {
      for (int col = 0; col < view_size; ++col) {
        const int forward = view_size - 1 - row;
        const int lateral = col - half;
        if (std::max(std::abs(forward), std::abs(lateral)) != ring) continue;
        const Vec2 center{2L * forward, 2L * lateral};
        bool lit = true;
        for (const Shadow& s : shadows) {
          if (s.covers(center)) {
            lit = false;
            break;
          }
        }
        visible[static_cast<std::size_t>(row * view_size + col)] = lit;
        if (ring > 0 && grid.is_wall(window_to_world(pose, view_size, row, col))) {
          ring_shadows.push_back(shadow_of(forward, lateral));
        }
      }
    }
    shadows.insert(shadows.end(), ring_shadows.begin(), ring_shadows.end());
  }
  return visible;
}

EgoObservation render_observation(const WorldState& state, Pose pose, int view_size) {
  if (view_size < 1 || view_size % 2 == 0) throw std::invalid_argument("view size must be odd");
  if (!state.grid.in_bounds(pose.cell)) throw std::out_of_range("pose outside the map");
  if (state.grid.is_wall(pose.cell)) throw std::invalid_argument("pose inside a wall");

  EgoObservation obs(view_size);
  const std::vector<bool> visible = visibility_mask(state.grid, pose, view_size);
  for (int row = 0; row < view_size; ++row) {
    for (int col = 0; col < view_size; ++col) {
      const Cell world = window_to_world(pose, view_size, row, col);
      if (!visible[static_cast<std::size_t>(row * view_size + col)] || !state.grid.in_bounds(world)) {
        continue;
      }
      Channel ch = Channel::Empty;
      switch (state.grid.at(world)) {
        case GridCell::Wall: ch = Channel::Wall; break;
        case GridCell::Goal: ch = Channel::Goal; break;
        case GridCell::Empty: ch = Channel::Empty; break;
      }
      if (world == state.poi.cell && world != pose.cell) {
        ch = Channel::Poi;
        obs.poi_heading =
            static_cast<Heading>((static_cast<int>(state.poi.heading) - static_cast<int>(pose.heading) + 4) % 4);
      }
      obs.set(row, col, ch);
    }
  }
  return obs;
}

Pose poi_policy_step(const WorldState& state, double p_pause, Rng& rng) {
  const bool pause = rng.uniform() < p_pause;
  if (pause || state.poi.cell == state.goal) return state.poi;

  // The agent's cell is an obstacle when the route is recomputed.
  Grid blocked = state.grid;
  if (state.agent.cell != state.goal) blocked.set(state.agent.cell, GridCell::Wall);
  const std::vector<int> dist = distance_field(blocked, state.goal);
  auto at = [&](Cell c) { return dist[static_cast<std::size_t>(c.row * state.grid.width() + c.col)]; };
  const int here = at(state.poi.cell);
  for (int h = 0; h < 4; ++h) {
    const Heading heading = static_cast<Heading>(h);
    const Cell next = state.poi.cell + heading_delta(heading);
    if (blocked.is_wall(next) || next == state.agent.cell) continue;
    if (here > 0 && at(next) == here - 1) return {next, heading};
  }
  return state.poi;
}

bool is_terminal(const WorldState& state, const RewardConfig& reward) {
  return state.poi.cell == state.goal || state.step_count >= reward.max_steps ||
         manhattan(state.agent.cell, state.poi.cell) > reward.d_far;
}

std::pair<WorldState, StepOutcome> step(const WorldState& state, Action action,
                                        const EnvConfig& config, Rng& rng) {
  if (is_terminal(state, config.reward)) {
    throw std::logic_error("step called on a terminal state");
  }
  WorldState next = state;
  StepOutcome out;

  switch (action) {
    case Action::TurnLeft: next.agent.heading = turn_left(next.agent.heading); break;
    case Action::TurnRight: next.agent.heading = turn_right(next.agent.heading); break;
    case Action::Forward: {
      const Cell target = next.agent.cell + heading_delta(next.agent.heading);
      if (next.grid.is_wall(target) || target == next.poi.cell) {
        out.info.collision = true;
      } else {
        next.agent.cell = target;
      }
      break;
    }
  }

  next.poi = poi_policy_step(next, config.map.p_pause, rng);
  next.step_count += 1;

  out.observation = render_observation(next, next.agent, config.map.view_size);
  out.info.poi_visible = out.observation.poi_visible();
  out.info.poi_distance = manhattan(next.agent.cell, next.poi.cell);

  const RewardConfig& rc = config.reward;
  const bool near = out.info.poi_visible && chebyshev(next.agent.cell, next.poi.cell) <= rc.d_near;
  out.terminated = next.poi.cell == next.goal;
  out.reward = (near ? rc.r_near : 0.0) + (out.info.collision ? rc.r_collision : 0.0) +
               (out.terminated ? rc.r_goal : 0.0);
  out.truncated =
      !out.terminated && (out.info.poi_distance > rc.d_far || next.step_count >= rc.max_steps);
  return {std::move(next), std::move(out)};
}

std::string render_ascii(const WorldState& state) {
  std::ostringstream os;
  for (int r = 0; r < state.grid.height(); ++r) {
    for (int c = 0; c < state.grid.width(); ++c) {
      const Cell cell{r, c};
      char ch = '.';
      if (cell == state.agent.cell) {
        ch = 'A';
      } else if (cell == state.poi.cell) {
        ch = 'P';
      } else if (state.grid.at(cell) == GridCell::Wall) {
        ch = '#';
      } else if (state.grid.at(cell) == GridCell::Goal) {
        ch = 'G';
      }
      os << ch;
    }
    os << '\n';
  }
  return os.str();
}

EgoObservation Environment::reset(std::uint64_t seed) {
  state_ = generate_map(seed, config_.map);
  rng_ = Rng(derive_seed(seed, 0x5EEDULL));
  done_ = false;
  return observe();
}

StepOutcome Environment::step(Action action) {
  auto [next, outcome] = socnav::step(state_, action, config_, rng_);
  state_ = std::move(next);
  done_ = outcome.terminated || outcome.truncated;
  return outcome;
}

EgoObservation Environment::observe() const {
  return render_observation(state_, state_.agent, config_.map.view_size);
}

}  // namespace socnav

#include "socnav/dataset.hpp"

#include <cmath>
#include <queue>
#include <thread>

#include <nlohmann/json.hpp>

#include "socnav/binary_io.hpp"

namespace socnav {

namespace {

bool poi_in_view(const WorldState& state, Pose pose, int view_size) {
  return render_observation(state, pose, view_size).poi_visible();
}

// Result of applying `a` to `pose` for the expert; nullopt when the move is blocked.
std::optional<Pose> expert_successor(const WorldState& state, Pose pose, Action a) {
  switch (a) {
    case Action::TurnLeft: return Pose{pose.cell, turn_left(pose.heading)};
    case Action::TurnRight: return Pose{pose.cell, turn_right(pose.heading)};
    case Action::Forward: {
      const Cell target = pose.cell + heading_delta(pose.heading);
      if (state.grid.is_wall(target) || target == state.poi.cell || target == state.goal) {
        return std::nullopt;
      }
      return Pose{target, pose.heading};
    }
  }
  return std::nullopt;
}

}  // namespace

namespace {

// A* over (cell, heading) with unit costs; cost of the cheapest route from
// `from` into the goal set, or -1 when none exists.
int astar_cost(const WorldState& state, Pose from, int view_size) {
  const Cell poi = state.poi.cell;
  auto is_goal = [&](Pose p) { return manhattan(p.cell, poi) == 1 && poi_in_view(state, p, view_size); };
  const int width = state.grid.width();
  auto index = [width](Pose p) {
    return static_cast<std::size_t>((p.cell.row * width + p.cell.col) * 4 + static_cast<int>(p.heading));
  };
  auto heuristic = [poi](Cell c) { return std::max(0, manhattan(c, poi) - 1); };

  struct Entry {
    int f;
    long seq;
    int g;
    Pose pose;
  };
  auto worse = [](const Entry& a, const Entry& b) { return a.f != b.f ? a.f > b.f : a.seq > b.seq; };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);

  const std::size_t n = static_cast<std::size_t>(state.grid.height() * width * 4);
  std::vector<int> best_g(n, -1);
  std::vector<bool> closed(n, false);
  long seq = 0;
  best_g[index(from)] = 0;
  open.push({heuristic(from.cell), seq++, 0, from});
  while (!open.empty()) {
    const Entry cur = open.top();
    open.pop();
    if (closed[index(cur.pose)]) continue;
    closed[index(cur.pose)] = true;
    if (is_goal(cur.pose)) return cur.g;
    for (const Action a : kAllActions) {
      const auto next = expert_successor(state, cur.pose, a);
      if (!next) continue;
      const auto ni = index(*next);
      const int g = cur.g + 1;
      if (closed[ni] || (best_g[ni] >= 0 && best_g[ni] <= g)) continue;
      best_g[ni] = g;
      open.push({g + heuristic(next->cell), seq++, g, *next});
    }
  }
  return -1;
}

}  // namespace

Action astar_expert_action(const WorldState& state, int view_size) {
  const Cell poi = state.poi.cell;
  auto is_goal = [&](Pose p) { return manhattan(p.cell, poi) == 1 && poi_in_view(state, p, view_size); };

  if (is_goal(state.agent)) {
    for (const Action a : kAllActions) {
      const auto next = expert_successor(state, state.agent, a);
      if (next && is_goal(*next)) return a;
    }
    return Action::TurnLeft;
  }

  // First action, in enum order, that starts some cheapest plan.
  const int total = astar_cost(state, state.agent, view_size);
  if (total < 0) return Action::TurnLeft;
  for (const Action a : kAllActions) {
    const auto next = expert_successor(state, state.agent, a);
    if (next && astar_cost(state, *next, view_size) == total - 1) return a;
  }
  return Action::TurnLeft;
}

Manifest recount(const std::vector<Episode>& episodes) {
  Manifest m;
  m.format_version = kDatasetFormatVersion;
  for (const Episode& e : episodes) {
    (e.policy == PolicyTag::Random ? m.random_episodes : m.expert_episodes) += 1;
    m.total_steps += e.transitions.size();
  }
  return m;
}

Episode run_episode(std::uint64_t seed, PolicyTag policy, const EnvConfig& config) {
  Episode episode;
  episode.seed = seed;
  episode.policy = policy;

  Environment env(config);
  EgoObservation obs = env.reset(seed);
  episode.initial = env.state();
  Rng policy_rng(derive_seed(seed, 0xAC7ULL));

  while (!env.done()) {
    const Action action = policy == PolicyTag::Random
                              ? kAllActions[policy_rng.uniform_index(kNumActions)]
                              : astar_expert_action(env.state(), config.map.view_size);
    StepOutcome out = env.step(action);
    Transition t;
    t.obs = std::move(obs);
    t.action = action;
    t.reward = out.reward;
    t.next_obs = out.observation;
    t.terminated = out.terminated;
    t.truncated = out.truncated;
    t.snapshot = env.state();
    obs = std::move(out.observation);
    episode.transitions.push_back(std::move(t));
  }
  return episode;
}

Dataset collect_episodes(int n, double mix, std::uint64_t seed, const EnvConfig& config, int jobs) {
  if (n <= 0) throw std::invalid_argument("episode count must be positive");
  if (!(mix >= 0.0 && mix <= 1.0)) throw std::invalid_argument("mix must lie in [0, 1]");
  const auto n_random = static_cast<int>(std::llround(mix * n));

  Dataset d;
  d.episodes.resize(static_cast<std::size_t>(n));
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      const PolicyTag tag = i < n_random ? PolicyTag::Random : PolicyTag::Expert;
      d.episodes[static_cast<std::size_t>(i)] =
          run_episode(derive_seed(seed, static_cast<std::uint64_t>(i)), tag, config);
    }
  };
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(work, n * j / jobs, n * (j + 1) / jobs);
    for (auto& t : threads) t.join();
  }
  d.manifest = recount(d.episodes);
  return d;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::uint32_t kDatasetMagic = io::make_tag("SNDS");
constexpr std::uint32_t kEpisodeTag = io::make_tag("EPIS");
constexpr std::uint32_t kManifestTag = io::make_tag("MANI");
constexpr std::uint8_t kNoHeading = 0xFF;

void put_pose(io::ByteWriter& w, Pose p) {
  w.put(static_cast<std::int16_t>(p.cell.row));
  w.put(static_cast<std::int16_t>(p.cell.col));
  w.put(static_cast<std::uint8_t>(p.heading));
}

Heading checked_heading(std::uint8_t h) {
  if (h > 3) throw io::MalformedInputError("invalid heading");
  return static_cast<Heading>(h);
}

Pose get_pose(io::ByteReader& r) {
  Pose p;
  p.cell.row = r.get<std::int16_t>();
  p.cell.col = r.get<std::int16_t>();
  p.heading = checked_heading(r.get<std::uint8_t>());
  return p;
}

void put_state(io::ByteWriter& w, const WorldState& s) {
  w.put(static_cast<std::uint16_t>(s.grid.height()));
  w.put(static_cast<std::uint16_t>(s.grid.width()));
  for (const GridCell c : s.grid.cells()) w.put(static_cast<std::uint8_t>(c));
  put_pose(w, s.agent);
  put_pose(w, s.poi);
  w.put(static_cast<std::int16_t>(s.goal.row));
  w.put(static_cast<std::int16_t>(s.goal.col));
  w.put(static_cast<std::uint32_t>(s.step_count));
}

WorldState get_state(io::ByteReader& r) {
  WorldState s;
  const int h = r.get<std::uint16_t>();
  const int w = r.get<std::uint16_t>();
  s.grid = Grid(h, w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) {
      const auto v = r.get<std::uint8_t>();
      if (v > 2) throw io::MalformedInputError("invalid grid cell");
      s.grid.set({row, col}, static_cast<GridCell>(v));
    }
  }
  s.agent = get_pose(r);
  s.poi = get_pose(r);
  s.goal.row = r.get<std::int16_t>();
  s.goal.col = r.get<std::int16_t>();
  s.step_count = static_cast<int>(r.get<std::uint32_t>());
  return s;
}

void put_obs(io::ByteWriter& w, const EgoObservation& o) {
  w.put(static_cast<std::uint8_t>(o.view_size));
  for (const Channel c : o.cells) w.put(static_cast<std::uint8_t>(c));
  w.put(o.poi_heading ? static_cast<std::uint8_t>(*o.poi_heading) : kNoHeading);
}

EgoObservation get_obs(io::ByteReader& r) {
  EgoObservation o(r.get<std::uint8_t>());
  for (auto& c : o.cells) {
    const auto v = r.get<std::uint8_t>();
    if (v >= kNumChannels) throw io::MalformedInputError("invalid observation channel");
    c = static_cast<Channel>(v);
  }
  const auto h = r.get<std::uint8_t>();
  if (h != kNoHeading) o.poi_heading = checked_heading(h);
  return o;
}

std::vector<unsigned char> encode_episode(const Episode& e) {
  io::ByteWriter w;
  w.put(e.seed);
  w.put(static_cast<std::uint8_t>(e.policy));
  put_state(w, e.initial);
  w.put(static_cast<std::uint32_t>(e.transitions.size()));
  for (const Transition& t : e.transitions) {
    put_obs(w, t.obs);
    w.put(static_cast<std::uint8_t>(t.action));
    w.put(t.reward);
    put_obs(w, t.next_obs);
    w.put(static_cast<std::uint8_t>((t.terminated ? 1 : 0) | (t.truncated ? 2 : 0)));
    put_state(w, t.snapshot);
  }
  return w.take();
}

Episode decode_episode(const std::vector<unsigned char>& bytes) {
  io::ByteReader r(bytes);
  Episode e;
  e.seed = r.get<std::uint64_t>();
  const auto tag = r.get<std::uint8_t>();
  if (tag > 1) throw io::MalformedInputError("invalid policy tag");
  e.policy = static_cast<PolicyTag>(tag);
  e.initial = get_state(r);
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    Transition t;
    t.obs = get_obs(r);
    const auto a = r.get<std::uint8_t>();
    if (a >= kNumActions) throw io::MalformedInputError("invalid action");
    t.action = static_cast<Action>(a);
    t.reward = r.get<double>();
    t.next_obs = get_obs(r);
    const auto flags = r.get<std::uint8_t>();
    t.terminated = (flags & 1) != 0;
    t.truncated = (flags & 2) != 0;
    t.snapshot = get_state(r);
    e.transitions.push_back(std::move(t));
  }
  if (!r.at_end()) throw io::MalformedInputError("trailing bytes in episode record");
  return e;
}

nlohmann::json manifest_json(const Manifest& m) {
  return {{"format_version", m.format_version},
          {"random_episodes", m.random_episodes},
          {"expert_episodes", m.expert_episodes},
          {"episodes", m.random_episodes + m.expert_episodes},
          {"total_steps", m.total_steps}};
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  io::FrameWriter writer(path, kDatasetMagic, kDatasetFormatVersion);
  for (const Episode& e : dataset.episodes) writer.write_frame(kEpisodeTag, encode_episode(e));
  const std::string text = manifest_json(recount(dataset.episodes)).dump(2);
  writer.write_frame(kManifestTag, std::vector<unsigned char>(text.begin(), text.end()));
  writer.finish();
}

Dataset load_dataset(const std::string& path) {
  io::FrameReader reader(path, kDatasetMagic, kDatasetFormatVersion);
  Dataset d;
  std::optional<Manifest> declared;
  while (auto frame = reader.next()) {
    if (frame->tag == kEpisodeTag) {
      if (declared) throw io::MalformedInputError("episode after manifest");
      d.episodes.push_back(decode_episode(frame->payload));
    } else if (frame->tag == kManifestTag) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(frame->payload.begin(), frame->payload.end());
        Manifest m;
        m.format_version = j.at("format_version").get<std::uint32_t>();
        m.random_episodes = j.at("random_episodes").get<std::size_t>();
        m.expert_episodes = j.at("expert_episodes").get<std::size_t>();
        m.total_steps = j.at("total_steps").get<std::size_t>();
        declared = m;
      } catch (const nlohmann::json::exception& e) {
        throw io::MalformedInputError(std::string("bad manifest: ") + e.what());
      }
    } else {
      throw io::MalformedInputError("unknown frame tag");
    }
  }
  if (!declared) throw io::MalformedInputError("dataset has no manifest");
  d.manifest = recount(d.episodes);
  if (!(d.manifest == *declared)) throw io::MalformedInputError("manifest does not match contents");
  return d;
}

}  // namespace socnav

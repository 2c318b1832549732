#include "socnav/perspective_shift.hpp"

#include <array>
#include <deque>
#include <stdexcept>

namespace socnav {

std::optional<ObservedPose> observed_poi_pose(const EgoObservation& obs) {
  const auto cell = obs.poi_cell();
  if (!cell) return std::nullopt;
  return ObservedPose{cell->row, cell->col, obs.poi_heading.value_or(Heading::North)};
}

Pose window_viewer_pose(int view_size) { return Pose{{view_size - 1, view_size / 2}, Heading::North}; }

const char* to_string(InfluenceSource s) {
  switch (s) {
    case InfluenceSource::PerspectiveShift: return "PerspectiveShift";
    case InfluenceSource::UniformRandom: return "UniformRandom";
    case InfluenceSource::PerfectInformation: return "PerfectInformation";
  }
  return "?";
}

const char* condition_name(InfluenceSource s) {
  switch (s) {
    case InfluenceSource::PerspectiveShift: return "shift";
    case InfluenceSource::UniformRandom: return "random";
    case InfluenceSource::PerfectInformation: return "perfect";
  }
  return "?";
}

InfluenceSource parse_condition(const std::string& name) {
  if (name == "shift") return InfluenceSource::PerspectiveShift;
  if (name == "random") return InfluenceSource::UniformRandom;
  if (name == "perfect") return InfluenceSource::PerfectInformation;
  throw std::invalid_argument("unknown condition '" + name + "' (expected shift, random or perfect)");
}

namespace {

Heading turn(Heading h, int delta) { return static_cast<Heading>((static_cast<int>(h) + delta + 4) % 4); }

}  // namespace

ImaginedPlan plan_imagined_actions(const EgoObservation& obs, const ObservedPose& target, int max_len) {
  const int v = obs.view_size;
  const Pose start = window_viewer_pose(v);
  if (target.rel_row == start.cell.row && target.rel_col == start.cell.col && target.heading == start.heading) {
    return {};
  }
  if (target.rel_row < 0 || target.rel_col < 0 || target.rel_row >= v || target.rel_col >= v ||
      obs.at(target.rel_row, target.rel_col) != Channel::Poi) {
    throw std::invalid_argument("imagined target is not a visible POI cell");
  }
  auto open = [&](Cell c) {
    if (c.row < 0 || c.col < 0 || c.row >= v || c.col >= v) return false;
    const Channel ch = obs.at(c.row, c.col);
    return ch == Channel::Empty || ch == Channel::Goal || ch == Channel::Poi;
  };
  auto index = [&](Cell c, Heading h) { return (c.row * v + c.col) * 4 + static_cast<int>(h); };
  auto successor = [&](Pose p, Action a) {
    switch (a) {
      case Action::TurnLeft: return Pose{p.cell, turn(p.heading, -1)};
      case Action::TurnRight: return Pose{p.cell, turn(p.heading, 1)};
      case Action::Forward: {
        const Cell next = p.cell + heading_delta(p.heading);
        return open(next) ? Pose{next, p.heading} : p;
      }
    }
    return p;
  };

  // Distances to the target over the reversed move graph, then a greedy walk
  // that always takes the first action stepping one closer.
  std::vector<int> dist(static_cast<std::size_t>(v * v * 4), -1);
  std::deque<Pose> queue;
  const Pose goal{{target.rel_row, target.rel_col}, target.heading};
  dist[static_cast<std::size_t>(index(goal.cell, goal.heading))] = 0;
  queue.push_back(goal);
  while (!queue.empty()) {
    const Pose p = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(index(p.cell, p.heading))];
    std::array<Pose, 3> preds{Pose{p.cell, turn(p.heading, 1)}, Pose{p.cell, turn(p.heading, -1)},
                              Pose{{p.cell.row - heading_delta(p.heading).row, p.cell.col - heading_delta(p.heading).col},
                                   p.heading}};
    for (int i = 0; i < 3; ++i) {
      const Pose q = preds[static_cast<std::size_t>(i)];
      if (i == 2 && !open(q.cell)) continue;
      auto& slot = dist[static_cast<std::size_t>(index(q.cell, q.heading))];
      if (slot >= 0) continue;
      slot = d + 1;
      queue.push_back(q);
    }
  }

  Pose at = start;
  int remaining = dist[static_cast<std::size_t>(index(at.cell, at.heading))];
  if (remaining < 0 || remaining > max_len) return ImaginedPlan{{}, true};
  ImaginedPlan plan;
  while (remaining > 0) {
    for (Action a : kAllActions) {
      const Pose next = successor(at, a);
      if (dist[static_cast<std::size_t>(index(next.cell, next.heading))] == remaining - 1) {
        plan.actions.push_back(a);
        at = next;
        --remaining;
        break;
      }
    }
  }
  return plan;
}

InfluenceEstimate apply_perspective_shift(const FactoredBelief& belief, const EgoObservation& obs,
                                          const ObservedPose& target, const WorldModel& model, int max_len) {
  ImaginedPlan plan = plan_imagined_actions(obs, target, max_len);
  InfluenceEstimate out;
  if (plan.blocked) {
    out.belief = FactoredBelief::uniform(belief.num_factors(), belief.num_values());
    out.source = InfluenceSource::UniformRandom;
    out.fallback = true;
    return out;
  }
  out.belief = belief;
  for (Action a : plan.actions) out.belief = model.forward_predict(out.belief, a);
  out.source = InfluenceSource::PerspectiveShift;
  out.imagined_plan = std::move(plan.actions);
  return out;
}

FactoredBelief sample_flat_dirichlet(int num_factors, int num_values, Rng& rng) {
  nn::Matrix m(num_factors, num_values);
  for (int r = 0; r < num_factors; ++r) {
    for (int c = 0; c < num_values; ++c) m(r, c) = rng.exponential();
    m.row(r) /= m.row(r).sum();
  }
  return FactoredBelief(std::move(m));
}

InfluenceEstimate estimate_influence(InfluenceSource condition, const InfluenceContext& ctx, const WorldModel& model,
                                     Rng& rng, int max_len) {
  const WorldModelConfig& cfg = model.config();
  InfluenceEstimate out;
  switch (condition) {
    case InfluenceSource::PerspectiveShift: {
      if (!ctx.obs || !ctx.own_belief) throw std::invalid_argument("perspective shift needs the observation and belief");
      if (const auto pose = observed_poi_pose(*ctx.obs)) {
        return apply_perspective_shift(*ctx.own_belief, *ctx.obs, *pose, model, max_len);
      }
      out.belief = FactoredBelief::uniform(cfg.factors, cfg.values);
      out.source = InfluenceSource::UniformRandom;
      out.fallback = true;
      return out;
    }
    case InfluenceSource::UniformRandom:
      out.belief = sample_flat_dirichlet(cfg.factors, cfg.values, rng);
      out.source = InfluenceSource::UniformRandom;
      return out;
    case InfluenceSource::PerfectInformation:
      if (!ctx.snapshot) throw std::logic_error("perfect-information influence requires the ground-truth state");
      out.belief = model.encode(render_observation(*ctx.snapshot, ctx.snapshot->poi, cfg.view_size));
      out.source = InfluenceSource::PerfectInformation;
      return out;
  }
  throw std::invalid_argument("invalid influence condition");
}

}  // namespace socnav

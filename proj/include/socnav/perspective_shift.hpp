#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "socnav/world_model.hpp"

namespace socnav {

/// The POI's configuration as read from an observation, in the window frame
/// (the viewer sits at the bottom-center facing North).
struct ObservedPose {
  int rel_row = 0;
  int rel_col = 0;
  Heading heading = Heading::North;

  friend bool operator==(const ObservedPose&, const ObservedPose&) = default;
};

std::optional<ObservedPose> observed_poi_pose(const EgoObservation& obs);

/// The viewer's own pose in the window frame.
Pose window_viewer_pose(int view_size);

enum class InfluenceSource : std::uint8_t { PerspectiveShift = 0, UniformRandom = 1, PerfectInformation = 2 };

const char* to_string(InfluenceSource s);
/// Accepts "shift", "random" and "perfect".
InfluenceSource parse_condition(const std::string& name);
const char* condition_name(InfluenceSource s);

struct ImaginedPlan {
  std::vector<Action> actions;
  bool blocked = false;
};

inline constexpr int kDefaultMaxPlanLength = 16;

/// Shortest turn/forward sequence inside the window from the viewer's pose to
/// `target`, moving only through Empty, Goal and POI cells. Among shortest
/// plans the lexicographically smallest in action order is returned. No
/// plan of length ≤ max_len gives an empty, blocked result. A target equal to
/// the viewer's own pose gives an empty plan; any other target must be a
/// visible POI cell.
ImaginedPlan plan_imagined_actions(const EgoObservation& obs, const ObservedPose& target,
                                   int max_len = kDefaultMaxPlanLength);

struct InfluenceEstimate {
  FactoredBelief belief;
  InfluenceSource source = InfluenceSource::UniformRandom;
  /// Present exactly when source is PerspectiveShift.
  std::optional<std::vector<Action>> imagined_plan;
  /// Set when PerspectiveShift degraded to the uniform belief.
  bool fallback = false;
};

/// Rolls the forward model along the imagined plan from `belief`. A blocked
/// plan yields the flat uniform belief with source UniformRandom.
InfluenceEstimate apply_perspective_shift(const FactoredBelief& belief, const EgoObservation& obs,
                                          const ObservedPose& target, const WorldModel& model,
                                          int max_len = kDefaultMaxPlanLength);

/// Everything estimate_influence may need about the current step.
struct InfluenceContext {
  const EgoObservation* obs = nullptr;
  const FactoredBelief* own_belief = nullptr;
  /// Ground-truth state; required by PerfectInformation.
  const WorldState* snapshot = nullptr;
};

/// Each row drawn from the flat Dirichlet over K values.
FactoredBelief sample_flat_dirichlet(int num_factors, int num_values, Rng& rng);

InfluenceEstimate estimate_influence(InfluenceSource condition, const InfluenceContext& context,
                                     const WorldModel& model, Rng& rng,
                                     int max_len = kDefaultMaxPlanLength);

}  // namespace socnav

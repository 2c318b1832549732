#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "socnav/grid.hpp"
#include "socnav/rng.hpp"

namespace socnav {

struct EnvConfig {
  MapConfig map;
  RewardConfig reward;
};

class MapGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 4-connected shortest-path distances from `source` over non-wall cells.
/// Unreachable cells hold -1.
std::vector<int> distance_field(const Grid& grid, Cell source);

/// Random bordered map with agent, POI and goal on distinct reachable cells.
/// Throws std::invalid_argument for a bad size and MapGenerationError when
/// no solvable layout is found within `config.max_attempts`.
WorldState generate_map(std::uint64_t seed, const MapConfig& config);

/// World cell seen at window position (row, col) from `pose`.
Cell window_to_world(Pose pose, int view_size, int row, int col);

/// Line-of-sight mask for the egocentric window, row-major view_size².
///
/// A cell is visible when the segment from the viewer's cell center to the
/// target's center crosses the open interior of no wall cell. Cells are
/// swept ring by ring (Chebyshev distance in the window frame) while the
/// angular shadow of every wall met so far accumulates; wall corners are
/// handled in doubled integer coordinates, so the test is exact.
std::vector<bool> visibility_mask(const Grid& grid, Pose pose, int view_size);

/// Renders the window for any valid pose. The viewer's own cell shows its
/// terrain; the POI is drawn wherever it is visible and not the viewer.
EgoObservation render_observation(const WorldState& state, Pose pose, int view_size);

/// One move of the goal-directed POI controller.
Pose poi_policy_step(const WorldState& state, double p_pause, Rng& rng);

/// True when stepping `state` would violate the step contract.
bool is_terminal(const WorldState& state, const RewardConfig& reward);

/// Advances agent then POI. Throws std::logic_error on a terminal state.
std::pair<WorldState, StepOutcome> step(const WorldState& state, Action action,
                                        const EnvConfig& config, Rng& rng);

std::string render_ascii(const WorldState& state);

/// Stateful wrapper owning one episode and its POI random stream.
class Environment {
 public:
  explicit Environment(EnvConfig config) : config_(std::move(config)) {}

  EgoObservation reset(std::uint64_t seed);
  StepOutcome step(Action action);

  const WorldState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  EgoObservation observe() const;
  bool done() const { return done_; }

 private:
  EnvConfig config_;
  WorldState state_;
  Rng rng_;
  bool done_ = true;
};

}  // namespace socnav

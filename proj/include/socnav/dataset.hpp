#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "socnav/gridworld.hpp"

namespace socnav {

/// First action of a minimal turn/forward plan (unit costs) that brings the
/// agent to a cell 4-adjacent to the POI with the POI in view. Ties go to the
/// lower action enum. The goal cell is never entered.
Action astar_expert_action(const WorldState& state, int view_size);

enum class PolicyTag : std::uint8_t { Random = 0, Expert = 1 };

struct Transition {
  EgoObservation obs;
  Action action = Action::TurnLeft;
  double reward = 0.0;
  EgoObservation next_obs;
  bool terminated = false;
  bool truncated = false;
  /// World state after the step; oracle-only side channel.
  WorldState snapshot;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct Episode {
  std::uint64_t seed = 0;
  PolicyTag policy = PolicyTag::Random;
  WorldState initial;
  std::vector<Transition> transitions;

  /// World state in effect when transition `t` was observed.
  const WorldState& state_before(std::size_t t) const {
    return t == 0 ? initial : transitions[t - 1].snapshot;
  }

  friend bool operator==(const Episode&, const Episode&) = default;
};

struct Manifest {
  std::uint32_t format_version = 0;
  std::size_t random_episodes = 0;
  std::size_t expert_episodes = 0;
  std::size_t total_steps = 0;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct Dataset {
  std::vector<Episode> episodes;
  Manifest manifest;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

Manifest recount(const std::vector<Episode>& episodes);

/// Rolls one episode on the map generated from `seed`.
Episode run_episode(std::uint64_t seed, PolicyTag policy, const EnvConfig& config);

/// round(mix·n) Random episodes followed by Expert ones, each on a fresh map.
/// `jobs` > 1 spreads episodes over threads; output does not depend on it.
Dataset collect_episodes(int n, double mix, std::uint64_t seed, const EnvConfig& config, int jobs = 1);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace socnav

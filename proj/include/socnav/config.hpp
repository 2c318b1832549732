#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "socnav/experiment.hpp"
#include "socnav/gridworld.hpp"
#include "socnav/world_model.hpp"

namespace socnav {

// JSON conversions. Missing keys keep their defaults; unknown keys are an
// error so that typos in configuration files do not pass silently.

void to_json(nlohmann::json& j, const MapConfig& c);
void from_json(const nlohmann::json& j, MapConfig& c);
void to_json(nlohmann::json& j, const RewardConfig& c);
void from_json(const nlohmann::json& j, RewardConfig& c);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);
void to_json(nlohmann::json& j, const WorldModelConfig& c);
void from_json(const nlohmann::json& j, WorldModelConfig& c);
void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

struct DatasetConfig {
  int episodes = 3000;
  double mix = 0.5;
  std::uint64_t seed = 1;
  int jobs = 1;
};
void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);

/// Everything one configuration file can hold.
struct AppConfig {
  EnvConfig env;
  DatasetConfig dataset;
  WorldModelConfig world_model;
  PolicyConfig policy;
  ExperimentConfig experiment;
};
void to_json(nlohmann::json& j, const AppConfig& c);
void from_json(const nlohmann::json& j, AppConfig& c);

/// Reads a JSON file; throws std::runtime_error naming the file on failure.
AppConfig load_config(const std::string& path);

}  // namespace socnav

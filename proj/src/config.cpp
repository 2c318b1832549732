#include "socnav/config.hpp"

#include <fstream>
#include <initializer_list>
#include <stdexcept>

namespace socnav {

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* section) {
  if (!j.is_object()) throw std::invalid_argument(std::string(section) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw std::invalid_argument(std::string(section) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void to_json(nlohmann::json& j, const MapConfig& c) {
  j = {{"size", c.size},
       {"view_size", c.view_size},
       {"wall_density", c.wall_density},
       {"p_pause", c.p_pause},
       {"min_goal_distance", c.min_goal_distance},
       {"max_start_distance", c.max_start_distance},
       {"max_attempts", c.max_attempts}};
}

void from_json(const nlohmann::json& j, MapConfig& c) {
  reject_unknown(j, {"size", "view_size", "wall_density", "p_pause", "min_goal_distance", "max_start_distance",
                     "max_attempts"},
                 "map");
  read(j, "size", c.size);
  read(j, "view_size", c.view_size);
  read(j, "wall_density", c.wall_density);
  read(j, "p_pause", c.p_pause);
  read(j, "min_goal_distance", c.min_goal_distance);
  read(j, "max_start_distance", c.max_start_distance);
  read(j, "max_attempts", c.max_attempts);
}

void to_json(nlohmann::json& j, const RewardConfig& c) {
  j = {{"r_near", c.r_near}, {"r_collision", c.r_collision}, {"r_goal", c.r_goal},
       {"d_near", c.d_near}, {"d_far", c.d_far},             {"max_steps", c.max_steps}};
}

void from_json(const nlohmann::json& j, RewardConfig& c) {
  reject_unknown(j, {"r_near", "r_collision", "r_goal", "d_near", "d_far", "max_steps"}, "reward");
  read(j, "r_near", c.r_near);
  read(j, "r_collision", c.r_collision);
  read(j, "r_goal", c.r_goal);
  read(j, "d_near", c.d_near);
  read(j, "d_far", c.d_far);
  read(j, "max_steps", c.max_steps);
}

void to_json(nlohmann::json& j, const EnvConfig& c) { j = {{"map", c.map}, {"reward", c.reward}}; }

void from_json(const nlohmann::json& j, EnvConfig& c) {
  reject_unknown(j, {"map", "reward"}, "env");
  read(j, "map", c.map);
  read(j, "reward", c.reward);
}

void to_json(nlohmann::json& j, const WorldModelConfig& c) {
  j = {{"view_size", c.view_size},
       {"factors", c.factors},
       {"values", c.values},
       {"action_dim", c.action_dim},
       {"channels", c.channels},
       {"forward_hidden", c.forward_hidden},
       {"inverse_hidden", c.inverse_hidden},
       {"beta", c.beta},
       {"embedding_scale", c.embedding_scale},
       {"batch", c.batch},
       {"steps", c.steps},
       {"lr", c.lr},
       {"tau_start", c.tau_start},
       {"tau_end", c.tau_end},
       {"seed", c.seed},
       {"holdout_every", c.holdout_every},
       {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, WorldModelConfig& c) {
  reject_unknown(j, {"view_size", "factors", "values", "action_dim", "channels", "forward_hidden", "inverse_hidden",
                     "beta", "embedding_scale", "batch", "steps", "lr", "tau_start", "tau_end", "seed",
                     "holdout_every", "log_every"},
                 "world_model");
  read(j, "view_size", c.view_size);
  read(j, "factors", c.factors);
  read(j, "values", c.values);
  read(j, "action_dim", c.action_dim);
  read(j, "channels", c.channels);
  read(j, "forward_hidden", c.forward_hidden);
  read(j, "inverse_hidden", c.inverse_hidden);
  read(j, "beta", c.beta);
  read(j, "embedding_scale", c.embedding_scale);
  read(j, "batch", c.batch);
  read(j, "steps", c.steps);
  read(j, "lr", c.lr);
  read(j, "tau_start", c.tau_start);
  read(j, "tau_end", c.tau_end);
  read(j, "seed", c.seed);
  read(j, "holdout_every", c.holdout_every);
  read(j, "log_every", c.log_every);
  if (c.factors <= 0 || c.values <= 1 || c.action_dim <= 0 || c.batch <= 0 || c.steps < 0 ||
      !(c.tau_start > 0.0) || !(c.tau_end > 0.0) || !(c.lr > 0.0)) {
    throw std::invalid_argument("world_model: invalid configuration");
  }
}

void to_json(nlohmann::json& j, const PolicyConfig& c) {
  j = {{"hidden", c.hidden},
       {"gamma", c.gamma},
       {"replay_capacity", c.replay_capacity},
       {"batch", c.batch},
       {"target_refresh", c.target_refresh},
       {"eps_start", c.eps_start},
       {"eps_end", c.eps_end},
       {"eps_fraction", c.eps_fraction},
       {"episodes", c.episodes},
       {"lr", c.lr},
       {"warmup", c.warmup},
       {"update_every", c.update_every},
       {"output_init_scale", c.output_init_scale},
       {"max_plan_length", c.max_plan_length}};
}

void from_json(const nlohmann::json& j, PolicyConfig& c) {
  reject_unknown(j, {"hidden", "gamma", "replay_capacity", "batch", "target_refresh", "eps_start", "eps_end",
                     "eps_fraction", "episodes", "lr", "warmup", "update_every", "output_init_scale",
                     "max_plan_length"},
                 "policy");
  read(j, "hidden", c.hidden);
  read(j, "gamma", c.gamma);
  read(j, "replay_capacity", c.replay_capacity);
  read(j, "batch", c.batch);
  read(j, "target_refresh", c.target_refresh);
  read(j, "eps_start", c.eps_start);
  read(j, "eps_end", c.eps_end);
  read(j, "eps_fraction", c.eps_fraction);
  read(j, "episodes", c.episodes);
  read(j, "lr", c.lr);
  read(j, "warmup", c.warmup);
  read(j, "update_every", c.update_every);
  read(j, "output_init_scale", c.output_init_scale);
  read(j, "max_plan_length", c.max_plan_length);
  if (c.gamma < 0.0 || c.gamma >= 1.0) throw std::invalid_argument("policy: gamma must lie in [0, 1)");
  if (c.replay_capacity <= 0 || c.batch <= 0 || c.target_refresh <= 0 || c.episodes <= 0 || c.update_every <= 0) {
    throw std::invalid_argument("policy: invalid schedule");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"conditions", c.conditions},
       {"seeds", c.seeds},
       {"base_seed", c.base_seed},
       {"smoothing_window", c.smoothing_window},
       {"bootstrap_resamples", c.bootstrap_resamples},
       {"ci_level", c.ci_level},
       {"final_window", c.final_window},
       {"jobs", c.jobs},
       {"dataset", c.dataset},
       {"checkpoint", c.checkpoint}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  reject_unknown(j, {"conditions", "seeds", "base_seed", "smoothing_window", "bootstrap_resamples", "ci_level",
                     "final_window", "jobs", "dataset", "checkpoint"},
                 "experiment");
  read(j, "conditions", c.conditions);
  read(j, "seeds", c.seeds);
  read(j, "base_seed", c.base_seed);
  read(j, "smoothing_window", c.smoothing_window);
  read(j, "bootstrap_resamples", c.bootstrap_resamples);
  read(j, "ci_level", c.ci_level);
  read(j, "final_window", c.final_window);
  read(j, "jobs", c.jobs);
  read(j, "dataset", c.dataset);
  read(j, "checkpoint", c.checkpoint);
}

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = {{"episodes", c.episodes}, {"mix", c.mix}, {"seed", c.seed}, {"jobs", c.jobs}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
  reject_unknown(j, {"episodes", "mix", "seed", "jobs"}, "dataset");
  read(j, "episodes", c.episodes);
  read(j, "mix", c.mix);
  read(j, "seed", c.seed);
  read(j, "jobs", c.jobs);
}

void to_json(nlohmann::json& j, const AppConfig& c) {
  j = {{"env", c.env},
       {"dataset", c.dataset},
       {"world_model", c.world_model},
       {"policy", c.policy},
       {"experiment", c.experiment}};
}

void from_json(const nlohmann::json& j, AppConfig& c) {
  reject_unknown(j, {"env", "dataset", "world_model", "policy", "experiment"}, "config");
  read(j, "env", c.env);
  read(j, "dataset", c.dataset);
  read(j, "world_model", c.world_model);
  read(j, "policy", c.policy);
  read(j, "experiment", c.experiment);
  if (c.world_model.view_size != c.env.map.view_size) {
    throw std::invalid_argument("world_model.view_size must equal env.map.view_size");
  }
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  try {
    return nlohmann::json::parse(in).get<AppConfig>();
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace socnav

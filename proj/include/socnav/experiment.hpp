#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "socnav/dqn.hpp"

namespace socnav {

struct ExperimentConfig {
  std::vector<std::string> conditions{"perfect", "shift", "random"};
  int seeds = 5;
  std::uint64_t base_seed = 2024;
  int smoothing_window = 50;
  int bootstrap_resamples = 10000;
  double ci_level = 0.95;
  /// Trailing episodes averaged by final_score.
  int final_window = 200;
  int jobs = 1;
  std::string dataset;
  std::string checkpoint;
};

/// Percentile bootstrap of the mean. Needs at least two samples.
std::pair<double, double> bootstrap_ci(const std::vector<double>& samples, int resamples, double level, Rng& rng);

/// Trailing moving average; early points average what is available.
std::vector<double> smooth(const std::vector<double>& values, int window);

struct RunMetrics {
  std::string condition;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> returns;   // per seed, raw episode returns
  std::vector<std::vector<double>> smoothed;  // per seed
  std::vector<double> mean;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  /// Per-seed mean over the final window of the smoothed curve.
  std::vector<double> final_per_seed;
  double final_ci_low = 0.0;
  double final_ci_high = 0.0;
  bool partial = false;
  std::string error;
};

/// Mean of the last k points of the smoothed mean curve.
double final_score(const RunMetrics& metrics, int k);

/// Fills smoothed, mean and CI fields from `returns`.
void aggregate(RunMetrics& metrics, const ExperimentConfig& config);

struct ExperimentResult {
  std::vector<RunMetrics> runs;
  const RunMetrics* find(const std::string& condition) const;
};

struct GateVerdict {
  bool ordering = false;
  bool separation = false;
  bool passed() const { return ordering && separation; }
};

/// Perfect ≥ Shift ≥ Random on final_score, and the Shift and Random final
/// window CIs disjoint. Needs all three conditions.
GateVerdict condition_gate(const ExperimentResult& result, const ExperimentConfig& config);

using ProgressFn = std::function<void(const std::string& condition, std::size_t seed_index, const EpisodeRecord&)>;

/// Trains every (condition, seed) pair. A failed seed marks its condition as
/// partial and keeps the error; other conditions still run.
ExperimentResult run_experiment(const ExperimentConfig& config, const EnvConfig& env, const PolicyConfig& policy,
                                const WorldModel& model, const ProgressFn& progress = {},
                                const std::string& policy_dir = {});

nlohmann::json summarize(const ExperimentResult& result, const ExperimentConfig& config);

/// curves_<condition>.csv, summary.json and learning_curves.png under `dir`.
void write_experiment_outputs(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir);

void write_curve_csv(const RunMetrics& metrics, const std::string& path);

}  // namespace socnav

#include "socnav/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "socnav/plot.hpp"

namespace socnav {

std::pair<double, double> bootstrap_ci(const std::vector<double>& samples, int resamples, double level, Rng& rng) {
  if (samples.size() < 2) throw std::invalid_argument("bootstrap needs at least two samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  if (resamples < 1) throw std::invalid_argument("need at least one resample");
  const std::size_t n = samples.size();
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (double& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += samples[rng.uniform_index(n)];
    m = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = 1.0 - level;
  const auto r = static_cast<double>(resamples);
  auto lo = static_cast<std::size_t>(std::floor(alpha / 2.0 * r));
  auto hi = static_cast<std::size_t>(std::max(0.0, std::ceil((1.0 - alpha / 2.0) * r) - 1.0));
  lo = std::min(lo, means.size() - 1);
  hi = std::min(hi, means.size() - 1);
  return {means[lo], means[hi]};
}

std::vector<double> smooth(const std::vector<double>& values, int window) {
  if (window < 1) throw std::invalid_argument("smoothing window must be positive");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= static_cast<std::size_t>(window)) sum -= values[i - static_cast<std::size_t>(window)];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
  }
  return out;
}

double final_score(const RunMetrics& metrics, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > metrics.mean.size()) {
    throw std::invalid_argument("final window longer than the curve");
  }
  const auto begin = metrics.mean.end() - k;
  return std::accumulate(begin, metrics.mean.end(), 0.0) / k;
}

void aggregate(RunMetrics& m, const ExperimentConfig& config) {
  if (m.returns.size() < 2) throw std::invalid_argument("confidence intervals need at least two seeds");
  const std::size_t len = m.returns.front().size();
  for (const auto& r : m.returns) {
    if (r.size() != len) throw std::invalid_argument("seed curves differ in length");
  }
  if (config.final_window < 1 || static_cast<std::size_t>(config.final_window) > len) {
    throw std::invalid_argument("final window longer than the curve");
  }
  m.smoothed.clear();
  for (const auto& r : m.returns) m.smoothed.push_back(smooth(r, config.smoothing_window));

  const std::size_t seeds = m.smoothed.size();
  m.mean.assign(len, 0.0);
  m.ci_low.assign(len, 0.0);
  m.ci_high.assign(len, 0.0);
  Rng rng(derive_seed(config.base_seed, 0xB0075ULL));
  std::vector<double> column(seeds);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t s = 0; s < seeds; ++s) column[s] = m.smoothed[s][t];
    m.mean[t] = std::accumulate(column.begin(), column.end(), 0.0) / static_cast<double>(seeds);
    std::tie(m.ci_low[t], m.ci_high[t]) = bootstrap_ci(column, config.bootstrap_resamples, config.ci_level, rng);
  }

  m.final_per_seed.clear();
  for (const auto& s : m.smoothed) {
    m.final_per_seed.push_back(std::accumulate(s.end() - config.final_window, s.end(), 0.0) / config.final_window);
  }
  Rng final_rng(derive_seed(config.base_seed, 0xF17A1ULL));
  std::tie(m.final_ci_low, m.final_ci_high) =
      bootstrap_ci(m.final_per_seed, config.bootstrap_resamples, config.ci_level, final_rng);
}

const RunMetrics* ExperimentResult::find(const std::string& condition) const {
  for (const RunMetrics& r : runs) {
    if (r.condition == condition) return &r;
  }
  return nullptr;
}

GateVerdict condition_gate(const ExperimentResult& result, const ExperimentConfig& config) {
  const RunMetrics* perfect = result.find("perfect");
  const RunMetrics* shift = result.find("shift");
  const RunMetrics* random = result.find("random");
  GateVerdict v;
  if (!perfect || !shift || !random || perfect->partial || shift->partial || random->partial) return v;
  const double fp = final_score(*perfect, config.final_window);
  const double fs = final_score(*shift, config.final_window);
  const double fr = final_score(*random, config.final_window);
  v.ordering = fp >= fs && fs >= fr;
  v.separation = shift->final_ci_low > random->final_ci_high;
  return v;
}

void write_curve_csv(const RunMetrics& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "episode,mean,ci_low,ci_high";
  for (std::size_t s = 0; s < m.smoothed.size(); ++s) out << ",seed" << s;
  out << '\n';
  for (std::size_t t = 0; t < m.mean.size(); ++t) {
    out << fmt::format("{},{},{},{}", t, m.mean[t], m.ci_low[t], m.ci_high[t]);
    for (const auto& s : m.smoothed) out << ',' << fmt::format("{}", s[t]);
    out << '\n';
  }
}

namespace {

void write_seed_csv(const std::vector<EpisodeRecord>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "episode,return,steps,terminated,epsilon,fallbacks\n";
  for (const EpisodeRecord& r : curve) {
    out << fmt::format("{},{},{},{},{},{}\n", r.episode, r.episode_return, r.steps, r.terminated ? 1 : 0, r.epsilon,
                       r.fallbacks);
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const EnvConfig& env, const PolicyConfig& policy,
                                const WorldModel& model, const ProgressFn& progress, const std::string& policy_dir) {
  if (config.seeds < 2) throw std::invalid_argument("at least two seeds per condition are required");
  if (config.conditions.empty()) throw std::invalid_argument("no conditions configured");
  for (const std::string& c : config.conditions) parse_condition(c);
  if (!policy_dir.empty()) std::filesystem::create_directories(policy_dir);

  ExperimentResult result;
  for (const std::string& c : config.conditions) {
    RunMetrics m;
    m.condition = c;
    for (int s = 0; s < config.seeds; ++s) m.seeds.push_back(derive_seed(config.base_seed, static_cast<std::uint64_t>(s)));
    m.returns.resize(static_cast<std::size_t>(config.seeds));
    result.runs.push_back(std::move(m));
  }

  struct Job {
    std::size_t run, seed;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    for (std::size_t s = 0; s < static_cast<std::size_t>(config.seeds); ++s) jobs.push_back({r, s});
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      RunMetrics& m = result.runs[jobs[j].run];
      const std::size_t s = jobs[j].seed;
      {
        std::lock_guard lock(mu);
        if (m.partial) continue;
      }
      try {
        auto cb = [&](const EpisodeRecord& rec) {
          if (!progress) return;
          std::lock_guard lock(mu);
          progress(m.condition, s, rec);
        };
        PolicyRun run = train_policy(env, model, parse_condition(m.condition), m.seeds[s], policy, cb);
        std::vector<double> returns;
        for (const EpisodeRecord& r : run.curve) returns.push_back(r.episode_return);
        if (!policy_dir.empty()) {
          const std::string stem = fmt::format("{}/{}_seed{}", policy_dir, m.condition, s);
          write_seed_csv(run.curve, stem + ".csv");
          run.network.save(stem + ".qnet", {{"condition", m.condition}, {"seed", m.seeds[s]}});
        }
        std::lock_guard lock(mu);
        m.returns[s] = std::move(returns);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        m.partial = true;
        if (m.error.empty()) m.error = fmt::format("seed {}: {}", s, e.what());
      }
    }
  };
  const int threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (RunMetrics& m : result.runs) {
    if (!m.partial) aggregate(m, config);
  }
  return result;
}

nlohmann::json summarize(const ExperimentResult& result, const ExperimentConfig& config) {
  nlohmann::json conditions = nlohmann::json::object();
  for (const RunMetrics& m : result.runs) {
    nlohmann::json c = {{"partial", m.partial}, {"seeds", m.seeds}};
    if (m.partial) {
      c["error"] = m.error;
    } else {
      c["episodes"] = m.mean.size();
      c["final_score"] = final_score(m, config.final_window);
      c["final_ci"] = {m.final_ci_low, m.final_ci_high};
      c["final_per_seed"] = m.final_per_seed;
    }
    conditions[m.condition] = c;
  }
  const GateVerdict v = condition_gate(result, config);
  return {{"conditions", conditions},
          {"final_window", config.final_window},
          {"smoothing_window", config.smoothing_window},
          {"bootstrap_resamples", config.bootstrap_resamples},
          {"ci_level", config.ci_level},
          {"gate", {{"ordering", v.ordering}, {"separation", v.separation}, {"passed", v.passed()}}}};
}

void write_experiment_outputs(const ExperimentResult& result, const ExperimentConfig& config, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<plot::Series> series;
  const plot::Rgb palette[] = {{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {148, 103, 189}};
  std::size_t color = 0;
  for (const RunMetrics& m : result.runs) {
    if (m.partial) continue;
    write_curve_csv(m, fmt::format("{}/curves_{}.csv", dir, m.condition));
    series.push_back({m.condition, m.mean, m.ci_low, m.ci_high, palette[color++ % 4]});
  }
  {
    std::ofstream out(dir + "/summary.json");
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << summarize(result, config).dump(2) << '\n';
  }
  plot::line_chart(series, "Influence-augmented policy learning", "episode",
                   fmt::format("return (MA {})", config.smoothing_window), dir + "/learning_curves.png");
}

}  // namespace socnav

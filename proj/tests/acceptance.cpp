// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Expensive artifacts (dataset, world model,
// experiment grid) are cached under --artifacts, keyed by the config; pass
// --fresh to rebuild them.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>

#include <fmt/format.h>

#include "oracles.hpp"
#include "socnav/config.hpp"
#include "socnav/dataset.hpp"
#include "socnav/experiment.hpp"
#include "socnav/gridworld.hpp"
#include "socnav/perspective_shift.hpp"
#include "socnav/world_model.hpp"

namespace fs = std::filesystem;
using namespace socnav;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Verdict {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Verdict> verdicts;

void report(int id, bool pass, const std::string& detail) {
  verdicts.push_back({id, pass, detail});
  fmt::print("criterion {}: {}  {}\n", id, pass ? "PASS" : "FAIL", detail);
  std::fflush(stdout);
}

// --- environment oracles ----------------------------------------------------

void criterion_environment(const AppConfig& cfg) {
  const MapConfig& mc = cfg.env.map;
  int solvable = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const WorldState s = generate_map(seed, mc);
    const bool distinct = !(s.agent.cell == s.poi.cell) && !(s.agent.cell == s.goal) && !(s.poi.cell == s.goal);
    if (distinct && oracle::bfs_distance(s.grid, s.poi.cell, s.goal) > 0 &&
        oracle::bfs_distance(s.grid, s.agent.cell, s.poi.cell) > 0) {
      ++solvable;
    }
  }

  Rng rng(99);
  int agree = 0;
  for (int i = 0; i < 1000; ++i) {
    const WorldState s = generate_map(static_cast<std::uint64_t>(5000 + i), mc);
    Pose pose;
    do {
      pose.cell = {rng.uniform_int(1, mc.size - 2), rng.uniform_int(1, mc.size - 2)};
    } while (s.grid.at(pose.cell) == GridCell::Wall);
    pose.heading = static_cast<Heading>(rng.uniform_index(4));
    agree += visibility_mask(s.grid, pose, mc.view_size) == oracle::visibility(s.grid, pose, mc.view_size);
  }

  int kept = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Episode ep = run_episode(derive_seed(777, seed), PolicyTag::Expert, cfg.env);
    bool ok = true;
    for (const Transition& t : ep.transitions) {
      ok = ok && manhattan(t.snapshot.agent.cell, t.snapshot.poi.cell) <= cfg.env.reward.d_far;
    }
    kept += ok;
  }
  report(6, solvable == 1000 && agree == 1000 && kept >= 190,
         fmt::format("solvable maps {}/1000, visibility matches {}/1000, expert keeps POI within d_far {}/200 (need 190)",
                     solvable, agree, kept));
}

// --- gradient oracles -------------------------------------------------------

double relative_error(double fd, double an) { return std::abs(fd - an) / std::max(1e-6, std::abs(fd) + std::abs(an)); }

void criterion_gradients(const AppConfig& cfg, const Dataset& data) {
  const TransitionSplit split = split_transitions(data, cfg.world_model.holdout_every);
  WorldModel model(cfg.world_model, 5);
  Rng rng(9);
  std::vector<const Transition*> few(split.train.begin(), split.train.begin() + 4);
  LossBatch batch = make_batch(few, cfg.world_model, 0.7, rng);
  nn::ParameterList params = model.parameters();
  nn::zero_grad(params);
  const LossResult base = model.compute_loss(batch, {}, true);
  batch.frozen_next_probs = base.next_probs;
  batch.frozen_action_emb = base.action_emb_targets;
  double wm_worst = 0.0;
  int wm_checked = 0;
  for (nn::Parameter* p : params) {
    for (int t = 0; t < 4; ++t) {
      const auto i = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(p->value.size())));
      const double old = p->value.data()[i], h = 1e-5;
      p->value.data()[i] = old + h;
      const double lp = model.compute_loss(batch, {}, false).report.loss_total;
      p->value.data()[i] = old - h;
      const double lm = model.compute_loss(batch, {}, false).report.loss_total;
      p->value.data()[i] = old;
      wm_worst = std::max(wm_worst, relative_error((lp - lm) / (2 * h), p->grad.data()[i]));
      ++wm_checked;
    }
  }

  const int dim = 2 * cfg.world_model.latent_size();
  QNetwork online(dim, cfg.policy, 3), target(dim, cfg.policy, 4);
  std::vector<ReplayItem> items;
  for (int i = 0; i < 16; ++i) {
    ReplayItem it;
    it.input = policy_input(sample_flat_dirichlet(cfg.world_model.factors, cfg.world_model.values, rng),
                            sample_flat_dirichlet(cfg.world_model.factors, cfg.world_model.values, rng));
    it.next_input = policy_input(sample_flat_dirichlet(cfg.world_model.factors, cfg.world_model.values, rng),
                                 sample_flat_dirichlet(cfg.world_model.factors, cfg.world_model.values, rng));
    it.action = static_cast<Action>(rng.uniform_int(0, kNumActions - 1));
    it.reward = rng.uniform(-1.0, 10.0);
    it.terminal = rng.bernoulli(0.2);
    items.push_back(std::move(it));
  }
  std::vector<const ReplayItem*> qbatch;
  for (const ReplayItem& it : items) qbatch.push_back(&it);
  nn::ParameterList qparams = online.parameters();
  nn::zero_grad(qparams);
  dqn_loss(qbatch, online, target, cfg.policy.gamma, true);
  double q_worst = 0.0;
  int q_checked = 0;
  for (nn::Parameter* p : qparams) {
    for (int t = 0; t < 8; ++t) {
      const auto i = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(p->value.size())));
      const double old = p->value.data()[i], h = 1e-6;
      p->value.data()[i] = old + h;
      const double lp = dqn_loss(qbatch, online, target, cfg.policy.gamma, false);
      p->value.data()[i] = old - h;
      const double lm = dqn_loss(qbatch, online, target, cfg.policy.gamma, false);
      p->value.data()[i] = old;
      q_worst = std::max(q_worst, relative_error((lp - lm) / (2 * h), p->grad.data()[i]));
      ++q_checked;
    }
  }
  report(5, wm_worst <= 1e-3 && q_worst <= 1e-3 && wm_checked >= 32 && q_checked >= 16,
         fmt::format("world-model loss: worst relative error {:.2e} over {} parameters; DQN loss: {:.2e} over {} "
                     "parameters (limit 1e-3)",
                     wm_worst, wm_checked, q_worst, q_checked));
}

// --- belief invariants ------------------------------------------------------

void criterion_beliefs(const AppConfig& cfg, const WorldModel& trained) {
  const WorldModel untrained(cfg.world_model, 77);
  Rng rng(4242);
  long cases = 0, failures = 0;
  auto check = [&](const FactoredBelief& b) {
    ++cases;
    const bool shape = b.num_factors() == cfg.world_model.factors && b.num_values() == cfg.world_model.values;
    if (!shape || !b.is_normalized(1e-6)) ++failures;
  };
  std::uint64_t ep_seed = 0;
  while (cases < 12000) {
    const Episode ep = run_episode(derive_seed(31337, ep_seed), ep_seed % 2 ? PolicyTag::Expert : PolicyTag::Random,
                                   cfg.env);
    ++ep_seed;
    for (std::size_t t = 0; t < ep.transitions.size(); ++t) {
      const WorldModel& m = t % 2 ? trained : untrained;
      const WorldState& s = ep.state_before(t);
      const EgoObservation& obs = ep.transitions[t].obs;
      const FactoredBelief own = m.encode(obs);
      check(own);
      check(m.encode(obs, rng.uniform(0.05, 2.0), true, &rng));
      check(m.forward_predict(own, static_cast<Action>(rng.uniform_int(0, kNumActions - 1))));
      check(m.forward_predict(sample_flat_dirichlet(cfg.world_model.factors, cfg.world_model.values, rng),
                              static_cast<Action>(rng.uniform_int(0, kNumActions - 1))));
      if (const auto pose = observed_poi_pose(obs)) {
        check(apply_perspective_shift(own, obs, *pose, m, cfg.policy.max_plan_length).belief);
      }
      const InfluenceContext ctx{&obs, &own, &s};
      for (InfluenceSource c :
           {InfluenceSource::PerspectiveShift, InfluenceSource::UniformRandom, InfluenceSource::PerfectInformation}) {
        check(estimate_influence(c, ctx, m, rng, cfg.policy.max_plan_length).belief);
      }
    }
  }

  // Temperature limit: relaxed samples collapse onto the one-hot argmax.
  double worst = 0.0;
  const int nk = cfg.world_model.latent_size();
  for (int i = 0; i < 2000; ++i) {
    nn::Matrix logits(1, nk), noise(1, nk);
    for (int k = 0; k < nk; ++k) {
      logits(0, k) = 3.0 * rng.normal();
      noise(0, k) = rng.gumbel();
    }
    const nn::Matrix y = gumbel_softmax(logits, noise, 1e-8, cfg.world_model.values);
    const nn::Matrix z = logits + noise;
    for (int g = 0; g < cfg.world_model.factors; ++g) {
      Eigen::Index arg = 0;
      z.row(0).segment(g * cfg.world_model.values, cfg.world_model.values).maxCoeff(&arg);
      for (int k = 0; k < cfg.world_model.values; ++k) {
        worst = std::max(worst, std::abs(y(0, g * cfg.world_model.values + k) - (k == arg ? 1.0 : 0.0)));
      }
    }
  }
  report(4, failures == 0 && cases >= 10000 && worst <= 1e-3,
         fmt::format("{} beliefs checked, {} not normalized within 1e-6; one-hot limit worst deviation {:.1e} (limit "
                     "1e-3)",
                     cases, failures, worst));
}

// --- perspective-shift fidelity ----------------------------------------------

bool sees(const WorldState& s, Pose viewer, Cell target, int view) {
  const std::vector<bool> mask = visibility_mask(s.grid, viewer, view);
  for (int r = 0; r < view; ++r) {
    for (int c = 0; c < view; ++c) {
      if (mask[static_cast<std::size_t>(r * view + c)] && window_to_world(viewer, view, r, c) == target) return true;
    }
  }
  return false;
}

void criterion_shift(const AppConfig& cfg, const Dataset& data, const WorldModel& model) {
  const int view = cfg.world_model.view_size;
  Rng rng(derive_seed(cfg.experiment.base_seed, 0x5417));
  double kl_perfect = 0.0, kl_shift = 0.0, kl_random = 0.0;
  int states = 0, wins = 0, fallbacks = 0;
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    if (cfg.world_model.holdout_every <= 0 || e % static_cast<std::size_t>(cfg.world_model.holdout_every) != 0) continue;
    const Episode& ep = data.episodes[e];
    for (std::size_t t = 0; t < ep.transitions.size(); ++t) {
      const WorldState& s = ep.state_before(t);
      if (!sees(s, s.agent, s.poi.cell, view) || !sees(s, s.poi, s.agent.cell, view)) continue;
      const EgoObservation& obs = ep.transitions[t].obs;
      const FactoredBelief truth = model.encode(render_observation(s, s.poi, view));
      const FactoredBelief own = model.encode(obs);
      const InfluenceContext ctx{&obs, &own, &s};
      const InfluenceEstimate p = estimate_influence(InfluenceSource::PerfectInformation, ctx, model, rng);
      const InfluenceEstimate sh =
          estimate_influence(InfluenceSource::PerspectiveShift, ctx, model, rng, cfg.policy.max_plan_length);
      const InfluenceEstimate u = estimate_influence(InfluenceSource::UniformRandom, ctx, model, rng);
      const double kp = kl_divergence(truth, p.belief), ks = kl_divergence(truth, sh.belief),
                   ku = kl_divergence(truth, u.belief);
      kl_perfect += kp;
      kl_shift += ks;
      kl_random += ku;
      wins += ks < ku;
      fallbacks += sh.fallback;
      ++states;
    }
  }
  const double n = std::max(1, states);
  const double win_rate = wins / n;
  const bool ordered = kl_perfect / n <= kl_shift / n && kl_shift / n <= kl_random / n;
  report(3, states >= 500 && ordered && win_rate >= 0.8,
         fmt::format("{} held-out mutually visible states; mean KL perfect {:.4f} <= shift {:.4f} <= random {:.4f}: "
                     "{}; shift beats random on {}/{} = {:.2f}% (need 80%); {} blocked-plan fallbacks",
                     states, kl_perfect / n, kl_shift / n, kl_random / n, ordered ? "yes" : "no", wins, states,
                     100.0 * win_rate, fallbacks));
}

// --- artifacts ---------------------------------------------------------------

struct Artifacts {
  fs::path dir;
  bool fresh = false;

  fs::path file(const std::string& name) const { return dir / name; }
  bool have(const std::string& name) const { return !fresh && fs::exists(file(name)); }
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  out << j.dump(2) << '\n';
}

WorldModel trained_model(const AppConfig& cfg, const Dataset& data, const Artifacts& art) {
  const fs::path ckpt = art.file("world_model.ckpt");
  if (art.have("world_model.ckpt") && art.have("world_model.json")) {
    fmt::print("  using cached world model {}\n", ckpt.string());
    return WorldModel::load(ckpt.string());
  }
  fmt::print("  training world model for {} steps\n", cfg.world_model.steps);
  std::fflush(stdout);
  const auto t0 = Clock::now();
  const TransitionSplit split = split_transitions(data, cfg.world_model.holdout_every);
  WorldModel model(cfg.world_model, cfg.world_model.seed);
  WorldModelTrainer trainer(model, derive_seed(cfg.world_model.seed, 1));
  std::ofstream log(art.file("world_model.csv"));
  log << "step,temperature,loss_total,loss_recon,loss_prior_kl,loss_forward,loss_inverse,grad_norm\n";
  for (int s = 0; s < cfg.world_model.steps; ++s) {
    const TrainReport r = trainer.train_step_sampled(split.train);
    log << fmt::format("{},{},{},{},{},{},{},{}\n", r.step, r.temperature, r.loss_total, r.loss_recon,
                       r.loss_prior_kl, r.loss_forward, r.loss_inverse, r.grad_norm);
    if (r.step % 1000 == 0) {
      fmt::print("    step {} loss {:.3f}\n", r.step, r.loss_total);
      std::fflush(stdout);
    }
  }
  model.save(ckpt.string(), trainer.steps());
  write_json(art.file("world_model.json"), {{"seconds", seconds_since(t0)}, {"steps", trainer.steps()}});
  return model;
}

void criterion_world_model(const AppConfig& cfg, const Dataset& data, const WorldModel& model,
                           const Artifacts& art) {
  const TransitionSplit split = split_transitions(data, cfg.world_model.holdout_every);
  const ModelEvaluation ev = evaluate_model(model, split.heldout);
  const double seconds = read_json(art.file("world_model.json")).value("seconds", 0.0);

  // Exponentially smoothed loss_total at step 100 and at the end of training.
  double ema = 0.0, at100 = 0.0, last = 0.0;
  {
    std::ifstream log(art.file("world_model.csv"));
    std::string line;
    std::getline(log, line);
    bool first = true;
    while (std::getline(log, line)) {
      const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1);
      const long step = std::stol(line.substr(0, c1));
      const double loss = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
      ema = first ? loss : 0.99 * ema + 0.01 * loss;
      first = false;
      if (step == 100) at100 = ema;
      last = ema;
    }
  }
  const bool pass = ev.reconstruction_accuracy >= 0.90 && ev.inverse_accuracy > 1.0 / 3.0 && seconds <= 7200.0;
  report(2, pass,
         fmt::format("{} episodes, {} steps ({} held out); reconstruction {:.2f}% (need 90%), inverse accuracy "
                     "{:.2f}% (need > 33.3%), forward KL {:.3f} vs shuffled {:.3f}; smoothed loss {:.3f} at step "
                     "100, {:.3f} at the end; training took {:.0f} s",
                     data.episodes.size(), data.manifest.total_steps, split.heldout.size(),
                     100.0 * ev.reconstruction_accuracy, 100.0 * ev.inverse_accuracy, ev.forward_kl,
                     ev.shuffled_forward_kl, at100, last, seconds));
}

void criterion_experiment(const AppConfig& cfg, const WorldModel& model, const Artifacts& art) {
  const fs::path out = art.file("experiment");
  if (!art.have("experiment/summary.json") || !art.have("experiment/timing.json")) {
    fmt::print("  running {} conditions x {} seeds x {} episodes\n", cfg.experiment.conditions.size(),
               cfg.experiment.seeds, cfg.policy.episodes);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    const ExperimentResult result = run_experiment(
        cfg.experiment, cfg.env, cfg.policy, model,
        [&](const std::string& cond, std::size_t seed, const EpisodeRecord& r) {
          if ((r.episode + 1) % 500 == 0) {
            fmt::print("    {} seed {} episode {}\n", cond, seed, r.episode + 1);
            std::fflush(stdout);
          }
        },
        (out / "policies").string());
    write_experiment_outputs(result, cfg.experiment, out.string());
    write_json(out / "timing.json", {{"seconds", seconds_since(t0)}});
  } else {
    fmt::print("  using cached experiment outputs in {}\n", out.string());
  }
  const nlohmann::json summary = read_json(out / "summary.json");
  const double seconds = read_json(out / "timing.json").value("seconds", 0.0);
  const auto& c = summary.at("conditions");
  auto describe = [&](const char* name) {
    if (!c.contains(name)) return fmt::format("{} missing", name);
    const auto& x = c.at(name);
    if (x.value("partial", true)) return fmt::format("{} partial ({})", name, x.value("error", std::string{}));
    return fmt::format("{} {:.3f} [{:.3f}, {:.3f}]", name, x.at("final_score").get<double>(),
                       x.at("final_ci")[0].get<double>(), x.at("final_ci")[1].get<double>());
  };
  const bool ordering = summary.at("gate").at("ordering").get<bool>();
  const bool separation = summary.at("gate").at("separation").get<bool>();
  report(1, ordering && separation && seconds <= 8 * 3600.0,
         fmt::format("final scores (last {} episodes, CI over seeds): {}; {}; {}; ordering {}, shift/random CIs "
                     "disjoint {}; grid took {:.0f} s",
                     cfg.experiment.final_window, describe("perfect"), describe("shift"), describe("random"),
                     ordering ? "holds" : "fails", separation ? "yes" : "no", seconds));
}

void criterion_determinism(const AppConfig& cfg, const WorldModel& model, const Artifacts& art) {
  const fs::path dir = art.file("determinism");
  fs::remove_all(dir);
  fs::create_directories(dir);

  // Dataset: the cached file and two fresh collections must agree byte for byte.
  for (const char* name : {"a.snds", "b.snds"}) {
    save_dataset(collect_episodes(cfg.dataset.episodes, cfg.dataset.mix, cfg.dataset.seed, cfg.env, cfg.dataset.jobs),
                 (dir / name).string());
  }
  const std::string cached = slurp(art.file("dataset.snds"));
  const bool data_same = slurp(dir / "a.snds") == slurp(dir / "b.snds") && slurp(dir / "a.snds") == cached;

  // Metrics: the same reduced grid twice, compared file by file.
  ExperimentConfig ec = cfg.experiment;
  ec.seeds = 2;
  ec.final_window = 50;
  ec.bootstrap_resamples = 1000;
  PolicyConfig pc = cfg.policy;
  pc.episodes = 120;
  pc.warmup = 200;
  for (const char* run : {"run1", "run2"}) {
    write_experiment_outputs(run_experiment(ec, cfg.env, pc, model), ec, (dir / run).string());
  }
  bool metrics_same = true;
  int files = 0;
  for (const std::string& cond : ec.conditions) {
    const std::string f = "curves_" + cond + ".csv";
    metrics_same = metrics_same && slurp(dir / "run1" / f) == slurp(dir / "run2" / f) && !slurp(dir / "run1" / f).empty();
    ++files;
  }
  metrics_same = metrics_same && slurp(dir / "run1" / "summary.json") == slurp(dir / "run2" / "summary.json");
  report(7, data_same && metrics_same,
         fmt::format("dataset ({} episodes) identical across two fresh runs and the cached copy: {}; {} curve CSVs "
                     "and summary.json identical across two {}-episode grids: {}",
                     cfg.dataset.episodes, data_same ? "yes" : "no", files, pc.episodes,
                     metrics_same ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  std::string config_path = SOCNAV_SOURCE_DIR "/configs/default.json";
  std::string artifacts = SOCNAV_ARTIFACT_DIR;
  bool fresh = false;
  app.add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  app.add_option("--artifacts", artifacts, "cache directory for datasets, checkpoints and curves");
  app.add_flag("--fresh", fresh, "ignore cached artifacts");
  CLI11_PARSE(app, argc, argv);

  try {
    const AppConfig cfg = load_config(config_path);
    const std::string key = fmt::format("{:016x}", std::hash<std::string>{}(nlohmann::json(cfg).dump()));
    Artifacts art{fs::path(artifacts) / key, fresh};
    fs::create_directories(art.dir);
    write_json(art.file("config.json"), cfg);
    fmt::print("config {} (artifacts in {})\n", config_path, art.dir.string());

    Dataset data;
    if (art.have("dataset.snds")) {
      data = load_dataset(art.file("dataset.snds").string());
    } else {
      data = collect_episodes(cfg.dataset.episodes, cfg.dataset.mix, cfg.dataset.seed, cfg.env, cfg.dataset.jobs);
      save_dataset(data, art.file("dataset.snds").string());
    }

    criterion_environment(cfg);
    criterion_gradients(cfg, data);
    const WorldModel model = trained_model(cfg, data, art);
    criterion_world_model(cfg, data, model, art);
    criterion_shift(cfg, data, model);
    criterion_beliefs(cfg, model);
    criterion_experiment(cfg, model, art);
    criterion_determinism(cfg, model, art);
  } catch (const std::exception& e) {
    fmt::print("acceptance run aborted: {}\n", e.what());
    return 2;
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  fmt::print("\nsummary\n");
  for (const Verdict& v : verdicts) {
    fmt::print("  criterion {}: {}\n", v.id, v.pass ? "PASS" : "FAIL");
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}

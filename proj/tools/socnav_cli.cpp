// Command-line front end: data collection, world-model training, the
// perspective-shift debug view, policy training and the full evaluation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "socnav/config.hpp"
#include "socnav/dataset.hpp"
#include "socnav/experiment.hpp"
#include "socnav/perspective_shift.hpp"
#include "socnav/plot.hpp"
#include "socnav/world_model.hpp"

namespace fs = std::filesystem;
using namespace socnav;

namespace {

AppConfig config_or_default(const std::string& path) { return path.empty() ? AppConfig{} : load_config(path); }

// Paths inside a config file are taken relative to the file itself.
std::string resolve(const std::string& config_path, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute() || config_path.empty()) return p;
  return (fs::path(config_path).parent_path() / p).lexically_normal().string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// --- collect -------------------------------------------------------------

struct CollectArgs {
  std::string config, out;
  std::optional<int> episodes, jobs;
  std::optional<double> mix;
  std::optional<std::uint64_t> seed;
};

int run_collect(const CollectArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.episodes) cfg.dataset.episodes = *a.episodes;
  if (a.mix) cfg.dataset.mix = *a.mix;
  if (a.seed) cfg.dataset.seed = *a.seed;
  if (a.jobs) cfg.dataset.jobs = *a.jobs;
  spdlog::info("collecting {} episodes (mix {}, seed {})", cfg.dataset.episodes, cfg.dataset.mix, cfg.dataset.seed);
  const Dataset ds = collect_episodes(cfg.dataset.episodes, cfg.dataset.mix, cfg.dataset.seed, cfg.env, cfg.dataset.jobs);
  ensure_parent(a.out);
  save_dataset(ds, a.out);
  spdlog::info("wrote {}: {} random + {} expert episodes, {} steps", a.out, ds.manifest.random_episodes,
               ds.manifest.expert_episodes, ds.manifest.total_steps);
  return 0;
}

// --- train-model -----------------------------------------------------------

struct TrainModelArgs {
  std::string config, data, out, log;
  std::optional<int> steps;
};

int run_train_model(const TrainModelArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.steps) cfg.world_model.steps = *a.steps;
  const WorldModelConfig& wc = cfg.world_model;
  const Dataset ds = load_dataset(a.data);
  const TransitionSplit split = split_transitions(ds, wc.holdout_every);
  if (split.train.empty()) throw std::runtime_error("dataset has no training transitions");
  spdlog::info("{} training / {} held-out transitions, {} steps", split.train.size(), split.heldout.size(), wc.steps);

  WorldModel model(wc, wc.seed);
  WorldModelTrainer trainer(model, derive_seed(wc.seed, 1));
  const std::string log_path = a.log.empty() ? a.out + ".csv" : a.log;
  ensure_parent(log_path);
  std::ofstream log(log_path);
  log << "step,temperature,loss_total,loss_recon,loss_prior_kl,loss_forward,loss_inverse,grad_norm\n";
  for (int s = 0; s < wc.steps; ++s) {
    const TrainReport r = trainer.train_step_sampled(split.train);
    log << fmt::format("{},{},{},{},{},{},{},{}\n", r.step, r.temperature, r.loss_total, r.loss_recon,
                       r.loss_prior_kl, r.loss_forward, r.loss_inverse, r.grad_norm);
    if (wc.log_every > 0 && (r.step % wc.log_every == 0 || r.step == wc.steps)) {
      spdlog::info("step {:>6}  tau {:.3f}  total {:.4f}  recon {:.4f}  kl {:.4f}  fwd {:.4f}  inv {:.4f}", r.step,
                   r.temperature, r.loss_total, r.loss_recon, r.loss_prior_kl, r.loss_forward, r.loss_inverse);
    }
  }
  ensure_parent(a.out);
  model.save(a.out, trainer.steps());
  const ModelEvaluation ev = evaluate_model(model, split.heldout);
  spdlog::info("held-out: reconstruction {:.4f}  inverse accuracy {:.4f}  forward KL {:.4f} (shuffled {:.4f})",
               ev.reconstruction_accuracy, ev.inverse_accuracy, ev.forward_kl, ev.shuffled_forward_kl);
  spdlog::info("wrote {} and {}", a.out, log_path);
  return 0;
}

// --- shift -------------------------------------------------------------------

plot::Rgb channel_color(Channel c) {
  switch (c) {
    case Channel::Wall: return {70, 70, 70};
    case Channel::Empty: return {240, 240, 240};
    case Channel::Goal: return {60, 170, 80};
    case Channel::Poi: return {210, 50, 50};
    case Channel::OutOfView: return {15, 15, 25};
  }
  return {};
}

plot::Rgb heat(double p) {
  const double t = std::clamp(p, 0.0, 1.0);
  return {static_cast<std::uint8_t>(255 * std::min(1.0, 2 * t)), static_cast<std::uint8_t>(255 * t * t),
          static_cast<std::uint8_t>(255 * std::max(0.0, 1 - 3 * t) * 0.6 + 40)};
}

void draw_observation(plot::Canvas& cv, int x0, int y0, int cell, const EgoObservation& obs, const std::string& title) {
  cv.text(x0, y0, title, {30, 30, 30});
  y0 += 14;
  for (int r = 0; r < obs.view_size; ++r) {
    for (int c = 0; c < obs.view_size; ++c) {
      cv.fill_rect(x0 + c * cell + 1, y0 + r * cell + 1, x0 + (c + 1) * cell, y0 + (r + 1) * cell,
                   channel_color(obs.at(r, c)));
    }
  }
  const Pose me = window_viewer_pose(obs.view_size);
  const int cx = x0 + me.cell.col * cell + cell / 2, cy = y0 + me.cell.row * cell + cell / 2;
  cv.line(cx, cy + cell / 4, cx, cy - cell / 3, {40, 90, 220}, 3);
}

void draw_belief(plot::Canvas& cv, int x0, int y0, int cell, const FactoredBelief& b, const std::string& title) {
  cv.text(x0, y0, title, {30, 30, 30});
  y0 += 14;
  for (int r = 0; r < b.num_factors(); ++r) {
    for (int c = 0; c < b.num_values(); ++c) {
      cv.fill_rect(x0 + c * cell, y0 + r * cell, x0 + (c + 1) * cell - 1, y0 + (r + 1) * cell - 1,
                   heat(b.factors(r, c)));
    }
  }
}

struct ShiftArgs {
  std::string ckpt, episode, out = "shift_panels";
  int index = 0, t = 0, max_len = kDefaultMaxPlanLength;
};

int run_shift(const ShiftArgs& a) {
  const WorldModel model = WorldModel::load(a.ckpt);
  const Dataset ds = load_dataset(a.episode);
  if (a.index < 0 || static_cast<std::size_t>(a.index) >= ds.episodes.size()) {
    throw std::runtime_error(fmt::format("episode index {} out of range (dataset has {})", a.index, ds.episodes.size()));
  }
  const Episode& ep = ds.episodes[static_cast<std::size_t>(a.index)];
  if (a.t < 0 || static_cast<std::size_t>(a.t) >= ep.transitions.size()) {
    throw std::runtime_error(fmt::format("step {} out of range (episode has {})", a.t, ep.transitions.size()));
  }
  const EgoObservation& obs = ep.transitions[static_cast<std::size_t>(a.t)].obs;
  const WorldState& state = ep.state_before(static_cast<std::size_t>(a.t));
  const int view = model.config().view_size;

  const FactoredBelief b = model.encode(obs);
  Rng rng(0);
  const InfluenceEstimate est = estimate_influence(InfluenceSource::PerspectiveShift, {&obs, &b, &state}, model, rng,
                                                   a.max_len);
  const EgoObservation poi_view = render_observation(state, state.poi, view);
  const FactoredBelief truth = model.encode(poi_view);
  const EgoObservation recon = model.reconstruct(est.belief);

  std::string plan_text;
  if (est.imagined_plan) {
    for (Action act : *est.imagined_plan) plan_text += std::string(to_string(act)) + " ";
    if (est.imagined_plan->empty()) plan_text = "(empty)";
  } else {
    plan_text = obs.poi_visible() ? "blocked: uniform" : "POI not visible: uniform";
  }

  std::cout << render_ascii(state) << '\n';
  std::cout << "imagined plan: " << plan_text << '\n';
  std::cout << fmt::format("KL(true POI belief || shifted) = {:.4f}\n", kl_divergence(truth, est.belief));
  std::cout << fmt::format("KL(true POI belief || uniform) = {:.4f}\n",
                           kl_divergence(truth, FactoredBelief::uniform(b.num_factors(), b.num_values())));

  fs::create_directories(a.out);
  const int cell = 28, bcell = 18, pad = 24;
  const int panel_w = std::max(view * cell, b.num_values() * bcell);
  plot::Canvas cv(6 * (panel_w + pad) + pad, std::max(view * cell, b.num_factors() * bcell) + 90);
  int x = pad;
  draw_observation(cv, x, 10, cell, obs, "observation");
  x += panel_w + pad;
  draw_belief(cv, x, 10, bcell, b, "belief");
  x += panel_w + pad;
  draw_belief(cv, x, 10, bcell, est.belief, "shifted");
  x += panel_w + pad;
  draw_observation(cv, x, 10, cell, recon, "decoded");
  x += panel_w + pad;
  draw_observation(cv, x, 10, cell, poi_view, "POI view");
  x += panel_w + pad;
  draw_belief(cv, x, 10, bcell, truth, "POI belief");
  cv.text(pad, cv.height() - 20, "plan: " + plan_text, {30, 30, 30});
  cv.save_png(a.out + "/panel.png");

  auto single_obs = [&](const EgoObservation& o, const std::string& name) {
    plot::Canvas c(view * cell + 2 * pad, view * cell + 2 * pad + 14);
    draw_observation(c, pad, pad, cell, o, name);
    c.save_png(a.out + "/" + name + ".png");
  };
  auto single_belief = [&](const FactoredBelief& fb, const std::string& name) {
    plot::Canvas c(fb.num_values() * bcell + 2 * pad, fb.num_factors() * bcell + 2 * pad + 14);
    draw_belief(c, pad, pad, bcell, fb, name);
    c.save_png(a.out + "/" + name + ".png");
  };
  single_obs(obs, "observation");
  single_belief(b, "belief");
  single_belief(est.belief, "shifted");
  single_obs(recon, "decoded");
  single_obs(poi_view, "poi_view");
  spdlog::info("wrote panels to {}", a.out);
  return 0;
}

// --- train-policy --------------------------------------------------------------

struct TrainPolicyArgs {
  std::string config, ckpt, condition, out;
  std::optional<int> seeds, episodes;
};

int run_train_policy(const TrainPolicyArgs& a) {
  AppConfig cfg = config_or_default(a.config);
  if (a.episodes) cfg.policy.episodes = *a.episodes;
  ExperimentConfig ec = cfg.experiment;
  ec.conditions = {a.condition};
  if (a.seeds) ec.seeds = *a.seeds;
  if (ec.seeds < 1) throw std::runtime_error("--seeds must be positive");
  ec.final_window = std::min(ec.final_window, cfg.policy.episodes);
  const WorldModel model = WorldModel::load(a.ckpt);
  parse_condition(a.condition);

  fs::create_directories(a.out);
  for (int s = 0; s < ec.seeds; ++s) {
    const std::uint64_t seed = derive_seed(ec.base_seed, static_cast<std::uint64_t>(s));
    PolicyRun run = train_policy(cfg.env, model, parse_condition(a.condition), seed, cfg.policy,
                                 [&](const EpisodeRecord& r) {
                                   if ((r.episode + 1) % 100 == 0) {
                                     spdlog::info("{} seed {} episode {} return {:.2f} eps {:.3f}", a.condition, s,
                                                  r.episode + 1, r.episode_return, r.epsilon);
                                   }
                                 });
    const std::string stem = fmt::format("{}/{}_seed{}", a.out, a.condition, s);
    std::ofstream csv(stem + ".csv");
    csv << "episode,return,steps,terminated,epsilon,fallbacks\n";
    for (const EpisodeRecord& r : run.curve) {
      csv << fmt::format("{},{},{},{},{},{}\n", r.episode, r.episode_return, r.steps, r.terminated ? 1 : 0, r.epsilon,
                         r.fallbacks);
    }
    run.network.save(stem + ".qnet", {{"condition", a.condition}, {"seed", seed}});
  }
  spdlog::info("wrote per-seed curves and policies to {}", a.out);
  return 0;
}

// --- evaluate -------------------------------------------------------------------

struct EvaluateArgs {
  std::string config, out, ckpt;
  bool save_policies = false;
};

int run_evaluate(const EvaluateArgs& a) {
  const AppConfig cfg = load_config(a.config);
  ExperimentConfig ec = cfg.experiment;
  const std::string ckpt = a.ckpt.empty() ? resolve(a.config, ec.checkpoint) : a.ckpt;
  if (ckpt.empty() || !fs::exists(ckpt)) {
    throw std::runtime_error("world-model checkpoint not found: '" + ckpt + "' (run train-model first)");
  }
  const WorldModel model = WorldModel::load(ckpt);
  spdlog::info("{} conditions x {} seeds x {} episodes", ec.conditions.size(), ec.seeds, cfg.policy.episodes);
  const ExperimentResult result = run_experiment(
      ec, cfg.env, cfg.policy, model,
      [](const std::string& c, std::size_t s, const EpisodeRecord& r) {
        if ((r.episode + 1) % 250 == 0) {
          spdlog::info("{} seed {} episode {} return {:.2f}", c, s, r.episode + 1, r.episode_return);
        }
      },
      a.save_policies ? a.out + "/policies" : std::string{});
  write_experiment_outputs(result, ec, a.out);
  const nlohmann::json summary = summarize(result, ec);
  std::cout << summary.dump(2) << '\n';
  for (const RunMetrics& m : result.runs) {
    if (m.partial) spdlog::error("condition {} incomplete: {}", m.condition, m.error);
  }
  return summary["gate"]["passed"].get<bool>() ? 0 : 2;
}

// --- render ---------------------------------------------------------------------

int run_render(const std::string& config, std::uint64_t seed) {
  const AppConfig cfg = config_or_default(config);
  Environment env(cfg.env);
  const EgoObservation obs = env.reset(seed);
  std::cout << render_ascii(env.state()) << '\n';
  const char* glyphs = "#.GP?";
  for (int r = 0; r < obs.view_size; ++r) {
    for (int c = 0; c < obs.view_size; ++c) std::cout << glyphs[static_cast<int>(obs.at(r, c))];
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Belief-space social navigation: world model, perspective shift and influence-augmented DQN"};
  app.require_subcommand(1);

  CollectArgs collect;
  auto* c = app.add_subcommand("collect", "Roll random and expert episodes into a dataset file");
  c->add_option("--episodes", collect.episodes, "Number of episodes");
  c->add_option("--mix", collect.mix, "Share of random-policy episodes")->check(CLI::Range(0.0, 1.0));
  c->add_option("--seed", collect.seed, "Base seed");
  c->add_option("--jobs", collect.jobs, "Worker threads");
  c->add_option("--config", collect.config, "JSON config file")->check(CLI::ExistingFile);
  c->add_option("--out", collect.out, "Output dataset path")->required();

  TrainModelArgs tm;
  auto* t = app.add_subcommand("train-model", "Train the world model on a dataset");
  t->add_option("--data", tm.data, "Dataset path")->required()->check(CLI::ExistingFile);
  t->add_option("--steps", tm.steps, "Optimizer steps");
  t->add_option("--config", tm.config, "JSON config file")->check(CLI::ExistingFile);
  t->add_option("--out", tm.out, "Checkpoint path")->required();
  t->add_option("--log", tm.log, "Training-curve CSV (default: <out>.csv)");

  ShiftArgs sh;
  auto* s = app.add_subcommand("shift", "Render perspective-shift panels for one dataset step");
  s->add_option("--ckpt", sh.ckpt, "World-model checkpoint")->required()->check(CLI::ExistingFile);
  s->add_option("--episode", sh.episode, "Dataset file")->required()->check(CLI::ExistingFile);
  s->add_option("--index", sh.index, "Episode index within the dataset");
  s->add_option("--t", sh.t, "Step within the episode");
  s->add_option("--max-plan", sh.max_len, "Longest imagined plan");
  s->add_option("--out", sh.out, "Output directory");

  TrainPolicyArgs tp;
  auto* p = app.add_subcommand("train-policy", "Train DQN policies for one influence condition");
  p->add_option("--ckpt", tp.ckpt, "World-model checkpoint")->required()->check(CLI::ExistingFile);
  p->add_option("--condition", tp.condition, "Influence source")
      ->required()
      ->check(CLI::IsMember({"shift", "random", "perfect"}));
  p->add_option("--seeds", tp.seeds, "Independent seeds");
  p->add_option("--episodes", tp.episodes, "Episode budget per seed");
  p->add_option("--config", tp.config, "JSON config file")->check(CLI::ExistingFile);
  p->add_option("--out", tp.out, "Output directory")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Run every condition and seed, then write curves, summary and plot");
  e->add_option("--config", ev.config, "JSON config file")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--ckpt", ev.ckpt, "Override the configured checkpoint");
  e->add_flag("--save-policies", ev.save_policies, "Also keep per-seed curves and Q-networks");

  std::string render_config;
  std::uint64_t render_seed = 0;
  auto* r = app.add_subcommand("render", "Print a generated map and the agent's view");
  r->add_option("--seed", render_seed, "Map seed");
  r->add_option("--config", render_config, "JSON config file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (c->parsed()) return run_collect(collect);
    if (t->parsed()) return run_train_model(tm);
    if (s->parsed()) return run_shift(sh);
    if (p->parsed()) return run_train_policy(tp);
    if (e->parsed()) return run_evaluate(ev);
    if (r->parsed()) return run_render(render_config, render_seed);
  } catch (const std::exception& ex) {
    spdlog::error("{}", ex.what());
    return 1;
  }
  return 0;
}

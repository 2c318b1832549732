#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "socnav/belief.hpp"
#include "socnav/dataset.hpp"
#include "socnav/nn.hpp"

namespace socnav {

struct WorldModelConfig {
  int view_size = 5;
  int factors = 8;
  int values = 8;
  int action_dim = 8;
  std::array<int, 3> channels{16, 32, 32};
  int forward_hidden = 128;
  int inverse_hidden = 128;
  /// Weight of the KL(posterior ‖ uniform prior) term inside L_VAE.
  double beta = 1.0;
  double embedding_scale = 0.5;

  // Training schedule.
  int batch = 128;
  int steps = 10000;
  double lr = 3e-4;
  double tau_start = 1.0;
  double tau_end = 0.3;
  std::uint64_t seed = 17;
  int holdout_every = 10;
  int log_every = 100;

  int latent_size() const { return factors * values; }
  int cells() const { return view_size * view_size; }
};

/// Relaxation temperature at `step`: geometric interpolation from tau_start
/// to tau_end over the configured number of steps.
double temperature_at(const WorldModelConfig& config, long step);

/// One-hot rows (view², channels) for one observation.
nn::Matrix observation_onehot(const EgoObservation& obs);

/// Inputs of one world-model loss evaluation. `gumbel` holds the noise added
/// to the observation logits (B × N·K). The frozen targets, when present,
/// replace the stop-gradient quantities: a finite-difference oracle holds
/// them fixed while it perturbs parameters.
struct LossBatch {
  nn::Matrix obs;       // (B·view², channels)
  nn::Matrix next_obs;  // (B·view², channels)
  std::vector<int> actions;
  nn::Matrix gumbel;
  double temperature = 1.0;
  std::optional<nn::Matrix> frozen_next_probs;   // B × N·K
  std::optional<nn::Matrix> frozen_action_emb;   // B × d_a

  int size() const { return static_cast<int>(actions.size()); }
};

struct LossWeights {
  double vae = 1.0;
  double forward = 1.0;
  double inverse = 1.0;
};

struct TrainReport {
  double loss_recon = 0.0;
  double loss_prior_kl = 0.0;
  double loss_vae = 0.0;
  double loss_forward = 0.0;
  double loss_inverse = 0.0;
  double loss_total = 0.0;
  double grad_norm = 0.0;
  double temperature = 0.0;
  long step = 0;
};

struct LossResult {
  TrainReport report;
  /// Gradient reaching the encoder logits (2B × N·K; rows B.. are next_obs).
  nn::Matrix encoder_logit_grad;
  /// Stop-gradient targets actually used.
  nn::Matrix next_probs;
  nn::Matrix action_emb_targets;
};

class WorldModel {
 public:
  explicit WorldModel(WorldModelConfig config, std::uint64_t init_seed = 0);

  const WorldModelConfig& config() const { return config_; }

  /// Row-normalized belief for one observation; `sample` applies the Gumbel
  /// relaxation at `temperature` using `rng`.
  FactoredBelief encode(const EgoObservation& obs, double temperature = 1.0, bool sample = false,
                        Rng* rng = nullptr) const;
  /// Batched encoder: (B·view², channels) → B × N·K logits.
  nn::Matrix encode_logits(const nn::Matrix& onehot) const;

  /// Per-cell channel logits (view², channels).
  nn::Matrix decode(const FactoredBelief& belief) const;
  nn::Matrix decode_batch(const nn::Matrix& latents) const;
  EgoObservation reconstruct(const FactoredBelief& belief) const;

  FactoredBelief forward_predict(const FactoredBelief& belief, Action action) const;
  nn::Matrix forward_batch(const nn::Matrix& beliefs, const std::vector<int>& actions) const;

  nn::RowVector inverse_predict(const FactoredBelief& belief, const FactoredBelief& next) const;
  nn::Matrix inverse_batch(const nn::Matrix& beliefs, const nn::Matrix& next) const;
  /// Action whose embedding is nearest (Euclidean) to `embedding`.
  Action nearest_action(const nn::RowVector& embedding) const;
  const nn::Matrix& action_embeddings() const { return action_table_.value; }

  /// Full loss; accumulates parameter gradients when `backward` is set.
  LossResult compute_loss(const LossBatch& batch, const LossWeights& weights, bool backward);

  nn::ParameterList parameters();
  nn::ParameterList encoder_parameters();
  nn::ParameterList decoder_parameters();
  nn::ParameterList forward_parameters();
  nn::ParameterList inverse_parameters();
  nn::Parameter& action_table() { return action_table_; }

  void save(const std::string& path, long trained_steps = 0) const;
  /// Throws io::FormatError subclasses on damaged or incompatible files.
  static WorldModel load(const std::string& path, long* trained_steps = nullptr);

 private:
  void check_belief(const FactoredBelief& b) const;

  WorldModelConfig config_;
  nn::Conv2d conv1_, conv2_, conv3_;
  nn::SelfAttention attention_;
  nn::Dense enc_out_;
  nn::Dense dec_in_;
  nn::ConvTranspose2d deconv1_, deconv2_;
  nn::Dense fwd1_, fwd2_, fwd3_;
  nn::Dense inv1_, inv2_;
  nn::Parameter action_table_;
};

/// Split of dataset transitions into training and held-out sets, by episode.
struct TransitionSplit {
  std::vector<const Transition*> train;
  std::vector<const Transition*> heldout;
  std::vector<std::size_t> heldout_episodes;
};
TransitionSplit split_transitions(const Dataset& dataset, int holdout_every);

/// Packs transitions into a loss batch with fresh Gumbel noise.
LossBatch make_batch(const std::vector<const Transition*>& transitions, const WorldModelConfig& config,
                     double temperature, Rng& rng);

/// Owns the optimizer state and the schedule for one training stream.
class WorldModelTrainer {
 public:
  WorldModelTrainer(WorldModel& model, std::uint64_t seed);

  /// One optimizer update on `batch`. Throws std::runtime_error if the loss
  /// is not finite.
  TrainReport train_step(const std::vector<const Transition*>& batch);

  /// Samples a batch of the configured size from `pool` and trains on it.
  TrainReport train_step_sampled(const std::vector<const Transition*>& pool);

  long steps() const { return step_; }

 private:
  WorldModel& model_;
  nn::Adam optimizer_;
  Rng rng_;
  long step_ = 0;
};

struct ModelEvaluation {
  double reconstruction_accuracy = 0.0;  // cell-wise channel accuracy
  double inverse_accuracy = 0.0;
  double forward_kl = 0.0;           // mean KL(encode(next) ‖ forward_predict)
  double shuffled_forward_kl = 0.0;  // same with a mismatched action
  std::size_t transitions = 0;
};
ModelEvaluation evaluate_model(const WorldModel& model, const std::vector<const Transition*>& transitions);

}  // namespace socnav

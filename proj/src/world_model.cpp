#include "socnav/world_model.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "socnav/binary_io.hpp"
#include "socnav/checkpoint.hpp"
#include "socnav/config.hpp"

namespace socnav {

using nn::Matrix;

double temperature_at(const WorldModelConfig& config, long step) {
  const double frac = config.steps <= 1 ? 1.0 : std::min(1.0, static_cast<double>(step) / (config.steps - 1));
  return config.tau_start * std::pow(config.tau_end / config.tau_start, frac);
}

Matrix observation_onehot(const EgoObservation& obs) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(obs.cells.size()), kNumChannels);
  for (std::size_t i = 0; i < obs.cells.size(); ++i) {
    m(static_cast<Eigen::Index>(i), static_cast<int>(obs.cells[i])) = 1.0;
  }
  return m;
}

namespace {

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix vcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

Matrix reshape(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(m.data(), rows, cols);
}

struct EncoderCache {
  nn::Conv2d::Cache c1, c2, c3;
  nn::ReluCache r1, r2, r3;
  nn::SelfAttention::Cache attn;
  nn::Dense::Cache out;
};

struct DecoderCache {
  nn::Dense::Cache in;
  nn::ReluCache r0, r1;
  nn::ConvTranspose2d::Cache d1, d2;
};

struct MlpCache {
  nn::Dense::Cache d1, d2, d3;
  nn::ReluCache r1, r2;
};

}  // namespace

WorldModel::WorldModel(WorldModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  const nn::MapShape shape{config_.view_size};
  const auto& ch = config_.channels;
  const int nk = config_.latent_size();
  const int flat = config_.cells() * ch[2];

  conv1_ = nn::Conv2d("encoder.conv1", shape, kNumChannels, ch[0]);
  conv2_ = nn::Conv2d("encoder.conv2", shape, ch[0], ch[1]);
  attention_ = nn::SelfAttention("encoder.attention", config_.cells(), ch[1]);
  conv3_ = nn::Conv2d("encoder.conv3", shape, ch[1], ch[2]);
  enc_out_ = nn::Dense("encoder.logits", flat, nk);

  dec_in_ = nn::Dense("decoder.input", nk, flat);
  deconv1_ = nn::ConvTranspose2d("decoder.deconv1", shape, ch[2], ch[0]);
  deconv2_ = nn::ConvTranspose2d("decoder.deconv2", shape, ch[0], kNumChannels);

  fwd1_ = nn::Dense("forward.fc1", nk + config_.action_dim, config_.forward_hidden);
  fwd2_ = nn::Dense("forward.fc2", config_.forward_hidden, config_.forward_hidden);
  fwd3_ = nn::Dense("forward.fc3", config_.forward_hidden, nk);

  inv1_ = nn::Dense("inverse.fc1", 2 * nk, config_.inverse_hidden);
  inv2_ = nn::Dense("inverse.fc2", config_.inverse_hidden, config_.action_dim);

  action_table_ = nn::Parameter("action_embedding", kNumActions, config_.action_dim);

  Rng rng(init_seed);
  conv1_.init(rng, nn::Init::HeUniform);
  conv2_.init(rng, nn::Init::HeUniform);
  attention_.init(rng);
  conv3_.init(rng, nn::Init::HeUniform);
  enc_out_.init(rng, nn::Init::XavierUniform);
  dec_in_.init(rng, nn::Init::HeUniform);
  deconv1_.init(rng, nn::Init::HeUniform);
  deconv2_.init(rng, nn::Init::XavierUniform);
  fwd1_.init(rng, nn::Init::HeUniform);
  fwd2_.init(rng, nn::Init::HeUniform);
  fwd3_.init(rng, nn::Init::XavierUniform);
  inv1_.init(rng, nn::Init::HeUniform);
  inv2_.init(rng, nn::Init::XavierUniform);
  for (Eigen::Index i = 0; i < action_table_.value.size(); ++i) {
    action_table_.value.data()[i] = config_.embedding_scale * rng.normal();
  }
}

nn::ParameterList WorldModel::encoder_parameters() {
  nn::ParameterList out;
  for (auto* list : {&conv1_, &conv2_, &conv3_}) {
    for (auto* p : list->parameters()) out.push_back(p);
  }
  for (auto* p : attention_.parameters()) out.push_back(p);
  for (auto* p : enc_out_.parameters()) out.push_back(p);
  return out;
}

nn::ParameterList WorldModel::decoder_parameters() {
  nn::ParameterList out = dec_in_.parameters();
  for (auto* p : deconv1_.parameters()) out.push_back(p);
  for (auto* p : deconv2_.parameters()) out.push_back(p);
  return out;
}

nn::ParameterList WorldModel::forward_parameters() {
  nn::ParameterList out;
  for (auto* layer : {&fwd1_, &fwd2_, &fwd3_}) {
    for (auto* p : layer->parameters()) out.push_back(p);
  }
  return out;
}

nn::ParameterList WorldModel::inverse_parameters() {
  nn::ParameterList out = inv1_.parameters();
  for (auto* p : inv2_.parameters()) out.push_back(p);
  return out;
}

nn::ParameterList WorldModel::parameters() {
  nn::ParameterList out = encoder_parameters();
  for (const auto& list : {decoder_parameters(), forward_parameters(), inverse_parameters()}) {
    out.insert(out.end(), list.begin(), list.end());
  }
  out.push_back(&action_table_);
  return out;
}

// --- encoder / decoder ------------------------------------------------------

namespace {

Matrix run_encoder(const WorldModelConfig& cfg, const Matrix& x, EncoderCache* c, const nn::Conv2d& conv1,
                   const nn::Conv2d& conv2, const nn::SelfAttention& attention, const nn::Conv2d& conv3,
                   const nn::Dense& out) {
  if (x.cols() != kNumChannels || x.rows() % cfg.cells() != 0) {
    throw std::invalid_argument("observation batch does not match the configured view size");
  }
  const Eigen::Index batch = x.rows() / cfg.cells();
  Matrix h = nn::relu(conv1.forward(x, c ? &c->c1 : nullptr), c ? &c->r1 : nullptr);
  h = nn::relu(conv2.forward(h, c ? &c->c2 : nullptr), c ? &c->r2 : nullptr);
  h = attention.forward(h, c ? &c->attn : nullptr);
  h = nn::relu(conv3.forward(h, c ? &c->c3 : nullptr), c ? &c->r3 : nullptr);
  return out.forward(reshape(h, batch, h.size() / batch), c ? &c->out : nullptr);
}

}  // namespace

Matrix WorldModel::encode_logits(const Matrix& onehot) const {
  return run_encoder(config_, onehot, nullptr, conv1_, conv2_, attention_, conv3_, enc_out_);
}

FactoredBelief WorldModel::encode(const EgoObservation& obs, double temperature, bool sample, Rng* rng) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (obs.view_size != config_.view_size) throw std::invalid_argument("observation size mismatch");
  const Matrix logits = encode_logits(observation_onehot(obs));
  Matrix probs;
  if (sample) {
    if (!rng) throw std::invalid_argument("sampling requires a random stream");
    Matrix noise(1, logits.cols());
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng->gumbel();
    probs = gumbel_softmax(logits, noise, temperature, config_.values);
  } else {
    probs = group_softmax(logits, config_.values);
  }
  return FactoredBelief::from_flat(probs.row(0), config_.factors, temperature);
}

void WorldModel::check_belief(const FactoredBelief& b) const {
  if (b.num_factors() != config_.factors || b.num_values() != config_.values) {
    throw std::invalid_argument("belief shape does not match the model");
  }
}

Matrix WorldModel::decode_batch(const Matrix& latents) const {
  if (latents.cols() != config_.latent_size()) throw std::invalid_argument("latent width mismatch");
  const Eigen::Index batch = latents.rows();
  Matrix h = nn::relu(dec_in_.forward(latents));
  h = reshape(h, batch * config_.cells(), config_.channels[2]);
  h = nn::relu(deconv1_.forward(h));
  return deconv2_.forward(h);
}

Matrix WorldModel::decode(const FactoredBelief& belief) const {
  check_belief(belief);
  return decode_batch(belief.flatten());
}

EgoObservation WorldModel::reconstruct(const FactoredBelief& belief) const {
  const Matrix logits = decode(belief);
  EgoObservation obs(config_.view_size);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    obs.cells[static_cast<std::size_t>(r)] = static_cast<Channel>(best);
  }
  return obs;
}

// --- forward / inverse ------------------------------------------------------

Matrix WorldModel::forward_batch(const Matrix& beliefs, const std::vector<int>& actions) const {
  if (beliefs.rows() != static_cast<Eigen::Index>(actions.size())) {
    throw std::invalid_argument("one action per belief required");
  }
  Matrix emb(beliefs.rows(), config_.action_dim);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    emb.row(static_cast<Eigen::Index>(i)) = action_table_.value.row(actions[i]);
  }
  Matrix h = nn::relu(fwd1_.forward(hcat(beliefs, emb)));
  h = nn::relu(fwd2_.forward(h));
  return group_softmax(fwd3_.forward(h), config_.values);
}

FactoredBelief WorldModel::forward_predict(const FactoredBelief& belief, Action action) const {
  check_belief(belief);
  const Matrix next = forward_batch(belief.flatten(), {static_cast<int>(action)});
  return FactoredBelief::from_flat(next.row(0), config_.factors, belief.temperature);
}

Matrix WorldModel::inverse_batch(const Matrix& beliefs, const Matrix& next) const {
  return inv2_.forward(nn::relu(inv1_.forward(hcat(beliefs, next))));
}

nn::RowVector WorldModel::inverse_predict(const FactoredBelief& belief, const FactoredBelief& next) const {
  check_belief(belief);
  check_belief(next);
  return inverse_batch(belief.flatten(), next.flatten()).row(0);
}

Action WorldModel::nearest_action(const nn::RowVector& embedding) const {
  Eigen::Index best = 0;
  (action_table_.value.rowwise() - embedding).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<Action>(best);
}

// --- loss ---------------------------------------------------------------------

LossResult WorldModel::compute_loss(const LossBatch& batch, const LossWeights& w, bool backward) {
  const int b = batch.size();
  const int k = config_.values;
  const int nk = config_.latent_size();
  const int cells = config_.cells();
  const double tau = batch.temperature;
  if (b == 0) throw std::invalid_argument("empty batch");
  if (batch.gumbel.rows() != b || batch.gumbel.cols() != nk) throw std::invalid_argument("noise shape mismatch");

  LossResult res;
  TrainReport& rep = res.report;
  rep.temperature = tau;

  // Encoder over observations and successors together.
  EncoderCache enc;
  const Matrix logits =
      run_encoder(config_, vcat(batch.obs, batch.next_obs), &enc, conv1_, conv2_, attention_, conv3_, enc_out_);
  const Matrix q_all = group_softmax(logits, k);
  const Matrix log_q_all = group_log_softmax(logits, k);
  const Matrix q = q_all.topRows(b);
  const Matrix q_next = q_all.bottomRows(b);

  // L_VAE: reconstruction of the observation from a relaxed sample, plus
  // KL of the posterior against the uniform categorical prior.
  const Matrix z = gumbel_softmax(logits.topRows(b), batch.gumbel, tau, k);
  DecoderCache dec;
  Matrix h = nn::relu(dec_in_.forward(z, &dec.in), &dec.r0);
  h = reshape(h, static_cast<Eigen::Index>(b) * cells, config_.channels[2]);
  h = nn::relu(deconv1_.forward(h, &dec.d1), &dec.r1);
  const Matrix recon_logits = deconv2_.forward(h, &dec.d2);
  const Matrix recon_logp = group_log_softmax(recon_logits, kNumChannels);
  rep.loss_recon = -(recon_logp.array() * batch.obs.array()).sum() / b;

  const Matrix log_q = log_q_all.topRows(b);
  rep.loss_prior_kl = ((q.array() * log_q.array()).sum() + b * config_.factors * std::log(double(k))) / b;
  rep.loss_vae = rep.loss_recon + config_.beta * rep.loss_prior_kl;

  // L_forward: KL(sg(encode(next)) ‖ forward(encode(obs), a)).
  res.next_probs = batch.frozen_next_probs ? *batch.frozen_next_probs : q_next;
  const Matrix& target = res.next_probs;
  Matrix emb(b, config_.action_dim);
  for (int i = 0; i < b; ++i) emb.row(i) = action_table_.value.row(batch.actions[static_cast<std::size_t>(i)]);
  MlpCache fwd;
  Matrix f = nn::relu(fwd1_.forward(hcat(q, emb), &fwd.d1), &fwd.r1);
  f = nn::relu(fwd2_.forward(f, &fwd.d2), &fwd.r2);
  const Matrix pred_logits = fwd3_.forward(f, &fwd.d3);
  const Matrix pred_logp = group_log_softmax(pred_logits, k);
  double lf = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double t = target.data()[i];
    if (t > 0.0) lf += t * (std::log(t) - pred_logp.data()[i]);
  }
  rep.loss_forward = lf / b;

  // L_inverse: MSE against the (stopped) embedding of the taken action.
  res.action_emb_targets = batch.frozen_action_emb ? *batch.frozen_action_emb : emb;
  MlpCache inv;
  Matrix g = nn::relu(inv1_.forward(hcat(q, q_next), &inv.d1), &inv.r1);
  const Matrix inv_out = inv2_.forward(g, &inv.d2);
  const Matrix diff = inv_out - res.action_emb_targets;
  rep.loss_inverse = diff.squaredNorm() / (static_cast<double>(b) * config_.action_dim);

  rep.loss_total = w.vae * rep.loss_vae + w.forward * rep.loss_forward + w.inverse * rep.loss_inverse;
  if (!backward) return res;

  Matrix dq_all = Matrix::Zero(2 * b, nk);
  Matrix dlogits = Matrix::Zero(2 * b, nk);

  // Decoder path.
  Matrix d = (group_softmax(recon_logits, kNumChannels) - batch.obs) * (w.vae / b);
  d = deconv2_.backward(d, dec.d2);
  d = deconv1_.backward(nn::relu_backward(d, dec.r1), dec.d1);
  d = reshape(d, b, d.size() / b);
  const Matrix dz = dec_in_.backward(nn::relu_backward(d, dec.r0), dec.in);
  dlogits.topRows(b) += group_softmax_backward(z, dz, k) / tau;

  // Prior KL, directly in logit space.
  {
    const double scale = w.vae * config_.beta / b;
    const Eigen::Index groups = nk / k;
    for (int r = 0; r < b; ++r) {
      for (Eigen::Index gi = 0; gi < groups; ++gi) {
        const auto qs = q.block(r, gi * k, 1, k);
        const auto ls = log_q.block(r, gi * k, 1, k);
        const double ent = qs.cwiseProduct(ls).sum();
        dlogits.block(r, gi * k, 1, k) += scale * (qs.array() * (ls.array() - ent)).matrix();
      }
    }
  }

  // Forward path: gradient into the predicting branch only.
  {
    Matrix df = (group_softmax(pred_logits, k) - target) * (w.forward / b);
    df = fwd3_.backward(df, fwd.d3);
    df = fwd2_.backward(nn::relu_backward(df, fwd.r2), fwd.d2);
    const Matrix din = fwd1_.backward(nn::relu_backward(df, fwd.r1), fwd.d1);
    dq_all.topRows(b) += din.leftCols(nk);
    for (int i = 0; i < b; ++i) {
      action_table_.grad.row(batch.actions[static_cast<std::size_t>(i)]) += din.row(i).rightCols(config_.action_dim);
    }
  }

  // Inverse path: reaches the encoder through both beliefs, never the table.
  {
    Matrix di = diff * (2.0 * w.inverse / (static_cast<double>(b) * config_.action_dim));
    di = inv2_.backward(di, inv.d2);
    const Matrix din = inv1_.backward(nn::relu_backward(di, inv.r1), inv.d1);
    dq_all.topRows(b) += din.leftCols(nk);
    dq_all.bottomRows(b) += din.rightCols(nk);
  }

  dlogits += group_softmax_backward(q_all, dq_all, k);
  res.encoder_logit_grad = dlogits;

  Matrix de = enc_out_.backward(dlogits, enc.out);
  de = reshape(de, 2L * b * cells, config_.channels[2]);
  de = conv3_.backward(nn::relu_backward(de, enc.r3), enc.c3);
  de = attention_.backward(de, enc.attn);
  de = conv2_.backward(nn::relu_backward(de, enc.r2), enc.c2);
  conv1_.backward(nn::relu_backward(de, enc.r1), enc.c1);
  return res;
}

// --- checkpoint -------------------------------------------------------------

namespace {
constexpr std::uint32_t kModelMagic = io::make_tag("SNWM");
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kConfigTag = io::make_tag("CONF");
constexpr std::uint32_t kParamTag = io::make_tag("PARM");

void write_params(io::FrameWriter& writer, const nn::ParameterList& params) {
  for (const nn::Parameter* p : params) {
    io::ByteWriter w;
    w.put_string(p->name);
    w.put(static_cast<std::uint64_t>(p->value.rows()));
    w.put(static_cast<std::uint64_t>(p->value.cols()));
    w.put_bytes(p->value.data(), static_cast<std::size_t>(p->value.size()) * sizeof(double));
    writer.write_frame(kParamTag, w.take());
  }
}

nlohmann::json shape_manifest(const nn::ParameterList& params) {
  nlohmann::json shapes = nlohmann::json::array();
  for (const nn::Parameter* p : params) {
    shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  }
  return shapes;
}
}  // namespace

void read_checkpoint_params(io::FrameReader& reader, const nn::ParameterList& params) {
  for (nn::Parameter* p : params) {
    auto frame = reader.next();
    if (!frame || frame->tag != kParamTag) throw io::MalformedInputError("missing parameter block " + p->name);
    io::ByteReader r(frame->payload);
    const std::string name = r.get_string();
    const auto rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    const auto cols = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    if (name != p->name || rows != p->value.rows() || cols != p->value.cols()) {
      throw io::MalformedInputError("parameter block " + name + " does not match " + p->name);
    }
    r.get_bytes(p->value.data(), static_cast<std::size_t>(p->value.size()) * sizeof(double));
    if (!r.at_end()) throw io::MalformedInputError("trailing bytes in parameter block " + name);
  }
  if (reader.next()) throw io::MalformedInputError("unexpected extra frames");
}

void write_checkpoint(const std::string& path, std::uint32_t magic, std::uint32_t version,
                      const nlohmann::json& header, const nn::ParameterList& params) {
  io::FrameWriter writer(path, magic, version);
  nlohmann::json h = header;
  h["parameters"] = shape_manifest(params);
  const std::string text = h.dump(2);
  writer.write_frame(kConfigTag, std::vector<unsigned char>(text.begin(), text.end()));
  write_params(writer, params);
  writer.finish();
}

nlohmann::json read_checkpoint_header(io::FrameReader& reader) {
  auto frame = reader.next();
  if (!frame || frame->tag != kConfigTag) throw io::MalformedInputError("checkpoint header missing");
  try {
    return nlohmann::json::parse(frame->payload.begin(), frame->payload.end());
  } catch (const nlohmann::json::exception& e) {
    throw io::MalformedInputError(std::string("bad checkpoint header: ") + e.what());
  }
}

void WorldModel::save(const std::string& path, long trained_steps) const {
  auto& self = const_cast<WorldModel&>(*this);
  nlohmann::json header = {{"config", config_}, {"trained_steps", trained_steps}};
  write_checkpoint(path, kModelMagic, kModelVersion, header, self.parameters());
}

WorldModel WorldModel::load(const std::string& path, long* trained_steps) {
  io::FrameReader reader(path, kModelMagic, kModelVersion);
  const nlohmann::json header = read_checkpoint_header(reader);
  WorldModelConfig config;
  try {
    config = header.at("config").get<WorldModelConfig>();
    if (trained_steps) *trained_steps = header.at("trained_steps").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw io::MalformedInputError(std::string("bad checkpoint header: ") + e.what());
  }
  WorldModel model(config);
  read_checkpoint_params(reader, model.parameters());
  return model;
}

// --- training -----------------------------------------------------------------

TransitionSplit split_transitions(const Dataset& dataset, int holdout_every) {
  TransitionSplit split;
  for (std::size_t e = 0; e < dataset.episodes.size(); ++e) {
    const bool held = holdout_every > 0 && e % static_cast<std::size_t>(holdout_every) == 0;
    if (held) split.heldout_episodes.push_back(e);
    for (const Transition& t : dataset.episodes[e].transitions) {
      (held ? split.heldout : split.train).push_back(&t);
    }
  }
  return split;
}

LossBatch make_batch(const std::vector<const Transition*>& transitions, const WorldModelConfig& config,
                     double temperature, Rng& rng) {
  const auto b = static_cast<Eigen::Index>(transitions.size());
  const int cells = config.cells();
  LossBatch batch;
  batch.obs.resize(b * cells, kNumChannels);
  batch.next_obs.resize(b * cells, kNumChannels);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Transition& t = *transitions[static_cast<std::size_t>(i)];
    batch.obs.middleRows(i * cells, cells) = observation_onehot(t.obs);
    batch.next_obs.middleRows(i * cells, cells) = observation_onehot(t.next_obs);
    batch.actions.push_back(static_cast<int>(t.action));
  }
  batch.gumbel.resize(b, config.latent_size());
  for (Eigen::Index i = 0; i < batch.gumbel.size(); ++i) batch.gumbel.data()[i] = rng.gumbel();
  batch.temperature = temperature;
  return batch;
}

WorldModelTrainer::WorldModelTrainer(WorldModel& model, std::uint64_t seed)
    : model_(model), optimizer_(model.parameters(), model.config().lr), rng_(seed) {}

TrainReport WorldModelTrainer::train_step(const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  const double tau = temperature_at(model_.config(), step_);
  const LossBatch lb = make_batch(batch, model_.config(), tau, rng_);
  const nn::ParameterList params = model_.parameters();
  nn::zero_grad(params);
  LossResult res = model_.compute_loss(lb, LossWeights{}, true);
  TrainReport rep = res.report;
  rep.grad_norm = nn::grad_norm(params);
  if (!std::isfinite(rep.loss_total) || !std::isfinite(rep.grad_norm)) {
    throw std::runtime_error("non-finite world-model loss at step " + std::to_string(step_) +
                             ": recon=" + std::to_string(rep.loss_recon) + " prior=" +
                             std::to_string(rep.loss_prior_kl) + " forward=" + std::to_string(rep.loss_forward) +
                             " inverse=" + std::to_string(rep.loss_inverse));
  }
  optimizer_.step(params);
  rep.step = ++step_;
  return rep;
}

TrainReport WorldModelTrainer::train_step_sampled(const std::vector<const Transition*>& pool) {
  std::vector<const Transition*> batch;
  batch.reserve(static_cast<std::size_t>(model_.config().batch));
  for (int i = 0; i < model_.config().batch; ++i) batch.push_back(pool[rng_.uniform_index(pool.size())]);
  return train_step(batch);
}

ModelEvaluation evaluate_model(const WorldModel& model, const std::vector<const Transition*>& transitions) {
  const WorldModelConfig& cfg = model.config();
  const int cells = cfg.cells();
  ModelEvaluation ev;
  ev.transitions = transitions.size();
  if (transitions.empty()) return ev;

  std::vector<int> shuffled(transitions.size());
  for (std::size_t i = 0; i < transitions.size(); ++i) shuffled[i] = static_cast<int>(transitions[i]->action);
  Rng rng(0x5AFFULL);
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);

  std::size_t cell_hits = 0, action_hits = 0;
  double fkl = 0.0, skl = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < transitions.size(); start += kChunk) {
    const std::size_t end = std::min(transitions.size(), start + kChunk);
    const auto n = static_cast<Eigen::Index>(end - start);
    Matrix obs(n * cells, kNumChannels), next(n * cells, kNumChannels);
    std::vector<int> actions, wrong;
    for (std::size_t i = start; i < end; ++i) {
      const auto r = static_cast<Eigen::Index>(i - start);
      obs.middleRows(r * cells, cells) = observation_onehot(transitions[i]->obs);
      next.middleRows(r * cells, cells) = observation_onehot(transitions[i]->next_obs);
      actions.push_back(static_cast<int>(transitions[i]->action));
      wrong.push_back(shuffled[i]);
    }
    const Matrix q = group_softmax(model.encode_logits(obs), cfg.values);
    const Matrix qn = group_softmax(model.encode_logits(next), cfg.values);

    const Matrix recon = model.decode_batch(q);
    for (Eigen::Index r = 0; r < recon.rows(); ++r) {
      Eigen::Index best = 0, truth = 0;
      recon.row(r).maxCoeff(&best);
      obs.row(r).maxCoeff(&truth);
      cell_hits += best == truth ? 1 : 0;
    }

    const Matrix inv = model.inverse_batch(q, qn);
    for (Eigen::Index r = 0; r < n; ++r) {
      action_hits += static_cast<int>(model.nearest_action(inv.row(r))) == actions[static_cast<std::size_t>(r)];
    }

    const Matrix pred = model.forward_batch(q, actions);
    const Matrix pred_wrong = model.forward_batch(q, wrong);
    for (Eigen::Index r = 0; r < n; ++r) {
      const FactoredBelief target = FactoredBelief::from_flat(qn.row(r), cfg.factors);
      fkl += kl_divergence(target, FactoredBelief::from_flat(pred.row(r), cfg.factors));
      skl += kl_divergence(target, FactoredBelief::from_flat(pred_wrong.row(r), cfg.factors));
    }
  }
  const auto total = static_cast<double>(transitions.size());
  ev.reconstruction_accuracy = static_cast<double>(cell_hits) / (total * cells);
  ev.inverse_accuracy = static_cast<double>(action_hits) / total;
  ev.forward_kl = fkl / total;
  ev.shuffled_forward_kl = skl / total;
  return ev;
}

}  // namespace socnav

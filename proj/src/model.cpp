#include "icast/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "icast/errors.hpp"
#include "icast/rng.hpp"

namespace icast {

void ModelConfig::validate() const {
  if (hidden_dim == 0 || feature_dim == 0 || taxonomy_size == 0 || max_turns == 0)
    throw ConfigError("model dimensions must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("dropout_rate must lie in [0,1)");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

DualHeadModel init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DualHeadModel m;
  m.cfg = cfg;
  Rng rng(mix_seed(seed, 0x1417));
  const double trunk_scale = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim) / 64.0);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  m.trunk_w.resize(cfg.feature_dim * cfg.hidden_dim);
  for (auto& w : m.trunk_w) w = rng.next_gaussian() * trunk_scale;
  m.trunk_b.assign(cfg.hidden_dim, 0.0);
  m.answer_w.resize(cfg.hidden_dim);
  for (auto& w : m.answer_w) w = rng.next_gaussian() * head_scale;
  m.answer_b = 0.0;
  m.intent_w.resize(cfg.intent_out() * cfg.hidden_dim);
  for (auto& w : m.intent_w) w = rng.next_gaussian() * head_scale;
  m.intent_b.assign(cfg.intent_out(), 0.0);
  return m;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double clamp_prob(double p) {
  if (p < kProbClamp) return kProbClamp;
  if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
  return p;
}

double bce(double p, double y) {
  p = clamp_prob(p);
  return -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
}

struct TrunkState {
  std::vector<double> hidden;   // post-activation, post-dropout
  std::vector<double> pre_tanh; // pre-activation
  std::vector<double> mask;     // dropout multiplier (1 or 1/(1-r) scaled keep)
};

TrunkState trunk_forward(const DualHeadModel& m, const FeatureVector& x,
                         ForwardMode mode) {
  if (x.dim != m.cfg.feature_dim)
    throw ContractViolation("feature dimension mismatch with model");
  const std::size_t H = m.cfg.hidden_dim;
  TrunkState st;
  st.pre_tanh = m.trunk_b;
  for (const auto& [idx, val] : x.entries) {
    const double* col = &m.trunk_w[static_cast<std::size_t>(idx) * H];
    const double v = static_cast<double>(val);
    for (std::size_t j = 0; j < H; ++j) st.pre_tanh[j] += col[j] * v;
  }
  st.hidden.resize(H);
  st.mask.assign(H, 1.0);
  const double r = m.cfg.dropout_rate;
  if (mode.stochastic && r > 0.0) {
    Rng rng(mix_seed(mode.seed, 0xd709));
    const double keep_scale = 1.0 / (1.0 - r);
    for (std::size_t j = 0; j < H; ++j)
      st.mask[j] = rng.next_bernoulli(r) ? 0.0 : keep_scale;
  }
  for (std::size_t j = 0; j < H; ++j)
    st.hidden[j] = std::tanh(st.pre_tanh[j]) * st.mask[j];
  return st;
}

double answer_head(const DualHeadModel& m, const TrunkState& st) {
  double z = m.answer_b;
  for (std::size_t j = 0; j < m.cfg.hidden_dim; ++j)
    z += m.answer_w[j] * st.hidden[j];
  return clamp_prob(sigmoid(z));
}

std::vector<double> intent_head(const DualHeadModel& m, const TrunkState& st) {
  const std::size_t H = m.cfg.hidden_dim;
  const std::size_t M = m.cfg.intent_out();
  std::vector<double> out(M);
  for (std::size_t k = 0; k < M; ++k) {
    double z = m.intent_b[k];
    const double* row = &m.intent_w[k * H];
    for (std::size_t j = 0; j < H; ++j) z += row[j] * st.hidden[j];
    out[k] = clamp_prob(sigmoid(z));
  }
  return out;
}

}  // namespace

double forward_answer(const DualHeadModel& model, const FeatureVector& features,
                      ForwardMode mode) {
  return answer_head(model, trunk_forward(model, features, mode));
}

std::vector<double> forward_intents(const DualHeadModel& model,
                                    const FeatureVector& features, ForwardMode mode) {
  return intent_head(model, trunk_forward(model, features, mode));
}

std::vector<double> mc_dropout_sample(const DualHeadModel& model,
                                      const FeatureVector& features, std::size_t T,
                                      std::uint64_t seed) {
  if (T == 0) throw ContractViolation("mc_dropout_sample: T must be >= 1");
  std::vector<double> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t)
    out.push_back(forward_answer(model, features,
                                 ForwardMode::with_dropout(mix_seed(seed, t))));
  return out;
}

namespace {

struct Accumulator {
  double loss_sum = 0.0;
  std::size_t count = 0;
};

// Backward through one head + trunk for a single input.
// dz: gradient at the head pre-sigmoid logit(s).
void backprop_answer(const DualHeadModel& m, const FeatureVector& x,
                     const TrunkState& st, double dz, Gradients& g) {
  const std::size_t H = m.cfg.hidden_dim;
  std::vector<double> dh(H);
  for (std::size_t j = 0; j < H; ++j) {
    g.answer_w[j] += dz * st.hidden[j];
    dh[j] = dz * m.answer_w[j];
  }
  g.answer_b += dz;
  for (std::size_t j = 0; j < H; ++j) {
    const double t = std::tanh(st.pre_tanh[j]);
    dh[j] *= st.mask[j] * (1.0 - t * t);
    g.trunk_b[j] += dh[j];
  }
  for (const auto& [idx, val] : x.entries) {
    double* col = &g.trunk_w[static_cast<std::size_t>(idx) * H];
    const double v = static_cast<double>(val);
    for (std::size_t j = 0; j < H; ++j) col[j] += dh[j] * v;
  }
}

void backprop_intents(const DualHeadModel& m, const FeatureVector& x,
                      const TrunkState& st, const std::vector<double>& dz,
                      Gradients& g) {
  const std::size_t H = m.cfg.hidden_dim;
  const std::size_t M = m.cfg.intent_out();
  std::vector<double> dh(H, 0.0);
  for (std::size_t k = 0; k < M; ++k) {
    if (dz[k] == 0.0) continue;
    const double* row = &m.intent_w[k * H];
    double* grow = &g.intent_w[k * H];
    for (std::size_t j = 0; j < H; ++j) {
      grow[j] += dz[k] * st.hidden[j];
      dh[j] += dz[k] * row[j];
    }
    g.intent_b[k] += dz[k];
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double t = std::tanh(st.pre_tanh[j]);
    dh[j] *= st.mask[j] * (1.0 - t * t);
    g.trunk_b[j] += dh[j];
  }
  for (const auto& [idx, val] : x.entries) {
    double* col = &g.trunk_w[static_cast<std::size_t>(idx) * H];
    const double v = static_cast<double>(val);
    for (std::size_t j = 0; j < H; ++j) col[j] += dh[j] * v;
  }
}

Gradients zero_gradients(const DualHeadModel& m) {
  Gradients g;
  g.trunk_w.assign(m.trunk_w.size(), 0.0);
  g.trunk_b.assign(m.trunk_b.size(), 0.0);
  g.answer_w.assign(m.answer_w.size(), 0.0);
  g.intent_w.assign(m.intent_w.size(), 0.0);
  g.intent_b.assign(m.intent_b.size(), 0.0);
  return g;
}

// Shared forward/backward; `grads` may be null for loss-only evaluation.
Losses batch_pass(const DualHeadModel& model, const std::vector<TrainExample>& batch,
                  ForwardMode mode, Gradients* grads) {
  if (batch.empty()) throw ContractViolation("empty batch");
  Accumulator acc_e, acc_plain, acc_aug;

  // Two sweeps: losses first so sub-batch means are known, then gradients.
  struct Routed {
    const TrainExample* ex;
    bool has_intent, to_augmented;
    std::uint64_t seed_intent, seed_answer;
  };
  std::vector<Routed> routed;
  routed.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TrainExample& ex = batch[i];
    Routed r{&ex, ex.intent_targets.has_value(), ex.augmented.has_value(),
             mix_seed(mode.seed, i, 0), mix_seed(mode.seed, i, 1)};
    if (r.has_intent) ++acc_e.count;
    if (ex.answer_label) {
      if (r.to_augmented) ++acc_aug.count;
      else ++acc_plain.count;
    }
    routed.push_back(r);
  }

  for (const Routed& r : routed) {
    const TrainExample& ex = *r.ex;
    if (r.has_intent) {
      ForwardMode fm = mode.stochastic ? ForwardMode::with_dropout(r.seed_intent) : mode;
      TrunkState st = trunk_forward(model, ex.plain, fm);
      auto probs = intent_head(model, st);
      const IntentTargets& tgt = *ex.intent_targets;
      if (tgt.values.size() != probs.size() ||
          tgt.row_mask.size() != model.cfg.max_turns)
        throw ContractViolation("intent target shape mismatch");
      double sum = 0.0;
      std::size_t n_entries = 0;
      for (std::size_t turn = 0; turn < model.cfg.max_turns; ++turn) {
        if (!tgt.row_mask[turn]) continue;
        for (std::size_t l = 0; l < model.cfg.taxonomy_size; ++l) {
          const std::size_t k = turn * model.cfg.taxonomy_size + l;
          sum += bce(probs[k], tgt.values[k]);
          ++n_entries;
        }
      }
      if (n_entries > 0) {
        const double sample_loss = sum / static_cast<double>(n_entries);
        acc_e.loss_sum += sample_loss;
        if (grads) {
          std::vector<double> dz(probs.size(), 0.0);
          const double scale =
              1.0 / (static_cast<double>(n_entries) * static_cast<double>(acc_e.count));
          for (std::size_t turn = 0; turn < model.cfg.max_turns; ++turn) {
            if (!tgt.row_mask[turn]) continue;
            for (std::size_t l = 0; l < model.cfg.taxonomy_size; ++l) {
              const std::size_t k = turn * model.cfg.taxonomy_size + l;
              dz[k] = (probs[k] - tgt.values[k]) * scale;
            }
          }
          backprop_intents(model, ex.plain, st, dz, *grads);
        }
      }
    }
    if (ex.answer_label) {
      const FeatureVector& input = r.to_augmented ? *ex.augmented : ex.plain;
      ForwardMode fm = mode.stochastic ? ForwardMode::with_dropout(r.seed_answer) : mode;
      TrunkState st = trunk_forward(model, input, fm);
      const double p = answer_head(model, st);
      const double y = *ex.answer_label;
      Accumulator& acc = r.to_augmented ? acc_aug : acc_plain;
      acc.loss_sum += bce(p, y);
      if (grads) {
        const double dz = (p - y) / static_cast<double>(acc.count);
        backprop_answer(model, input, st, dz, *grads);
      }
    }
  }

  Losses out;
  if (acc_e.count) out.intent = acc_e.loss_sum / static_cast<double>(acc_e.count);
  if (acc_plain.count) out.answer = acc_plain.loss_sum / static_cast<double>(acc_plain.count);
  if (acc_aug.count) out.augmented = acc_aug.loss_sum / static_cast<double>(acc_aug.count);
  return out;
}

}  // namespace

Losses compute_losses(const DualHeadModel& model, const std::vector<TrainExample>& batch,
                      ForwardMode mode) {
  return batch_pass(model, batch, mode, nullptr);
}

std::pair<Losses, Gradients> loss_and_gradients(const DualHeadModel& model,
                                                const std::vector<TrainExample>& batch,
                                                ForwardMode mode) {
  Gradients g = zero_gradients(model);
  Losses losses = batch_pass(model, batch, mode, &g);
  return {losses, std::move(g)};
}

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adamw_update_range(std::vector<double>& params, std::vector<double>& grad,
                        AdamState& st, const TrainConfig& cfg, std::size_t step,
                        std::size_t begin, std::size_t end) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = begin; i < end; ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= cfg.learning_rate *
                 (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * params[i]);
    grad[i] = 0.0;  // buffer is reused across steps
  }
}

void adamw_update(std::vector<double>& params, std::vector<double>& grad,
                  AdamState& st, const TrainConfig& cfg, std::size_t step) {
  adamw_update_range(params, grad, st, cfg, step, 0, params.size());
}

}  // namespace

std::vector<double> train(DualHeadModel& model, const std::vector<TrainExample>& data,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ContractViolation("train: empty dataset");

  AdamState st_tw(model.trunk_w.size()), st_tb(model.trunk_b.size());
  AdamState st_aw(model.answer_w.size()), st_ab(1);
  AdamState st_iw(model.intent_w.size()), st_ib(model.intent_b.size());

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  // Persistent gradient buffer plus the set of trunk input rows a batch
  // touches. Only those rows receive an optimizer step: with sparse hashed
  // inputs this is the bulk of the training cost, and rows with no signal
  // in the batch keep their momentum untouched. Deterministic by design.
  Gradients grads = zero_gradients(model);
  std::vector<std::uint32_t> touched_rows;
  const std::size_t H = model.cfg.hidden_dim;

  std::vector<double> history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5fbe, epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);

    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, data.size());
      std::vector<TrainExample> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) batch.push_back(data[order[i]]);

      ++step;
      ForwardMode fm = model.cfg.dropout_rate > 0.0
                           ? ForwardMode::with_dropout(mix_seed(cfg.seed, epoch, step))
                           : ForwardMode::deterministic();
      Losses losses = batch_pass(model, batch, fm, &grads);
      const double total = losses.total();
      if (!std::isfinite(total))
        throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(n_batches));
      epoch_loss += total;
      ++n_batches;

      touched_rows.clear();
      for (const TrainExample& ex : batch) {
        for (const auto& [idx, val] : ex.plain.entries) touched_rows.push_back(idx);
        if (ex.augmented)
          for (const auto& [idx, val] : ex.augmented->entries)
            touched_rows.push_back(idx);
      }
      std::sort(touched_rows.begin(), touched_rows.end());
      touched_rows.erase(std::unique(touched_rows.begin(), touched_rows.end()),
                         touched_rows.end());
      for (std::uint32_t row : touched_rows)
        adamw_update_range(model.trunk_w, grads.trunk_w, st_tw, cfg, step,
                           static_cast<std::size_t>(row) * H,
                           static_cast<std::size_t>(row) * H + H);
      adamw_update(model.trunk_b, grads.trunk_b, st_tb, cfg, step);
      adamw_update(model.answer_w, grads.answer_w, st_aw, cfg, step);
      {
        std::vector<double> p{model.answer_b}, g{grads.answer_b};
        adamw_update(p, g, st_ab, cfg, step);
        model.answer_b = p[0];
      }
      adamw_update(model.intent_w, grads.intent_w, st_iw, cfg, step);
      adamw_update(model.intent_b, grads.intent_b, st_ib, cfg, step);
    }
    history.push_back(n_batches ? epoch_loss / static_cast<double>(n_batches) : 0.0);
  }
  return history;
}

void save_model(const DualHeadModel& model, const std::string& path) {
  nlohmann::json j;
  j["config"] = {{"feature_dim", model.cfg.feature_dim},
                 {"hidden_dim", model.cfg.hidden_dim},
                 {"max_turns", model.cfg.max_turns},
                 {"taxonomy_size", model.cfg.taxonomy_size},
                 {"dropout_rate", model.cfg.dropout_rate}};
  j["trunk_w"] = model.trunk_w;
  j["trunk_b"] = model.trunk_b;
  j["answer_w"] = model.answer_w;
  j["answer_b"] = model.answer_b;
  j["intent_w"] = model.intent_w;
  j["intent_b"] = model.intent_b;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << j.dump();
  os.flush();
  if (!os) throw IoError("write failed: " + path);
}

DualHeadModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  nlohmann::json j;
  try {
    is >> j;
    DualHeadModel m;
    m.cfg.feature_dim = j.at("config").at("feature_dim").get<std::size_t>();
    m.cfg.hidden_dim = j.at("config").at("hidden_dim").get<std::size_t>();
    m.cfg.max_turns = j.at("config").at("max_turns").get<std::size_t>();
    m.cfg.taxonomy_size = j.at("config").at("taxonomy_size").get<std::size_t>();
    m.cfg.dropout_rate = j.at("config").at("dropout_rate").get<double>();
    m.trunk_w = j.at("trunk_w").get<std::vector<double>>();
    m.trunk_b = j.at("trunk_b").get<std::vector<double>>();
    m.answer_w = j.at("answer_w").get<std::vector<double>>();
    m.answer_b = j.at("answer_b").get<double>();
    m.intent_w = j.at("intent_w").get<std::vector<double>>();
    m.intent_b = j.at("intent_b").get<std::vector<double>>();
    m.cfg.validate();
    if (m.trunk_w.size() != m.cfg.feature_dim * m.cfg.hidden_dim ||
        m.intent_w.size() != m.cfg.intent_out() * m.cfg.hidden_dim)
      throw ParseError("checkpoint tensor shapes inconsistent with config");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint: ") + e.what());
  }
}

}  // namespace icast

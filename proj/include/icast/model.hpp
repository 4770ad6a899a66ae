#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icast/encoder.hpp"

namespace icast {

struct ModelConfig {
  std::size_t feature_dim = 4096;  // F
  std::size_t hidden_dim = 128;    // H
  std::size_t max_turns = 4;
  std::size_t taxonomy_size = 12;
  double dropout_rate = 0.1;

  std::size_t intent_out() const { return max_turns * taxonomy_size; }
  void validate() const;
};

// Shared tanh trunk with inverted dropout, a sigmoid answer head and a
// sigmoid multi-label intent head (all turns predicted in one pass).
struct DualHeadModel {
  ModelConfig cfg;
  std::vector<double> trunk_w;   // F x H, input-major
  std::vector<double> trunk_b;   // H
  std::vector<double> answer_w;  // H
  double answer_b = 0.0;
  std::vector<double> intent_w;  // M x H, M = max_turns * taxonomy_size
  std::vector<double> intent_b;  // M
};

DualHeadModel init_model(const ModelConfig& cfg, std::uint64_t seed);

struct ForwardMode {
  bool stochastic = false;
  std::uint64_t seed = 0;

  static ForwardMode deterministic() { return {false, 0}; }
  static ForwardMode with_dropout(std::uint64_t seed) { return {true, seed}; }
};

double forward_answer(const DualHeadModel& model, const FeatureVector& features,
                      ForwardMode mode);

// Probabilities for all max_turns x taxonomy_size intent slots, turn-major.
std::vector<double> forward_intents(const DualHeadModel& model,
                                    const FeatureVector& features, ForwardMode mode);

// T stochastic answer-head passes with fresh masks; pure function of seed.
std::vector<double> mc_dropout_sample(const DualHeadModel& model,
                                      const FeatureVector& features, std::size_t T,
                                      std::uint64_t seed);

struct IntentTargets {
  std::vector<double> values;         // M entries, turn-major
  std::vector<std::uint8_t> row_mask; // max_turns; rows without an utterance skipped
};

// One training unit. The answer loss is routed to L-tilde when the sample's
// input was intent-augmented, to L otherwise; the intent loss L^e is computed
// on the plain input whenever targets are present.
struct TrainExample {
  FeatureVector plain;
  std::optional<FeatureVector> augmented;
  std::optional<double> answer_label;
  std::optional<IntentTargets> intent_targets;
};

struct Losses {
  std::optional<double> intent;     // L^e
  std::optional<double> answer;     // L
  std::optional<double> augmented;  // L-tilde

  double total() const {
    return intent.value_or(0.0) + answer.value_or(0.0) + augmented.value_or(0.0);
  }
};

inline constexpr double kProbClamp = 1e-7;

Losses compute_losses(const DualHeadModel& model, const std::vector<TrainExample>& batch,
                      ForwardMode mode = ForwardMode::deterministic());

struct Gradients {
  std::vector<double> trunk_w, trunk_b, answer_w, intent_w, intent_b;
  double answer_b = 0.0;
};

// Gradients of the summed batch loss (L^e + L + L-tilde, absent terms omitted).
std::pair<Losses, Gradients> loss_and_gradients(const DualHeadModel& model,
                                                const std::vector<TrainExample>& batch,
                                                ForwardMode mode);

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = 1e-2;  // scaled up from 5e-5 for the small hashed model
  double weight_decay = 0.01;
  std::size_t epochs_per_round = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Shuffled mini-batch AdamW on the summed losses; returns per-epoch mean loss.
std::vector<double> train(DualHeadModel& model, const std::vector<TrainExample>& data,
                          const TrainConfig& cfg);

void save_model(const DualHeadModel& model, const std::string& path);
DualHeadModel load_model(const std::string& path);

}  // namespace icast

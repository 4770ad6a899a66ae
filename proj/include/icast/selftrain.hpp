#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icast/corpus.hpp"
#include "icast/encoder.hpp"
#include "icast/metrics.hpp"
#include "icast/model.hpp"

namespace icast {

// The five calibration thresholds, the intent-gain threshold and the
// MC-dropout sample count.
struct ThresholdConfig {
  double lambda_plus = 0.8;
  double lambda_minus = 0.1;
  double lambda_tilde_plus = 0.5;
  double lambda_tilde_minus = 0.5;
  double lambda_h = 0.2;
  double lambda_gain = 0.02;
  std::size_t T = 5;

  void validate() const;  // enforces lambda- < lambda~- <= lambda~+ < lambda+
};

enum class PseudoLabel { Positive, Negative, Abstain };

enum class AblationMode {
  FullIcast,     // the complete method
  NoIcge,        // every input intent-augmented unconditionally
  NoIcgeNoAlc,   // additionally outer thresholds only (no mid-band)
  NoIg,          // no intent machinery at all (the plain teacher-student baseline)
};

const char* ablation_mode_name(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& name);

// Per-sample scoring output bridging MC confidence and pseudo labeling.
struct ConfidenceRecord {
  double p_bar = 0.0;   // calibrated mean probability
  double g = 0.0;       // confidence without intents
  double g_tilde = 0.0; // confidence with intents
  double delta = 0.0;   // g_tilde - g, exactly
  bool intents_selected = false;
  double p_e = 1.0;     // scalar intent-confidence aggregate
  double g_used = 0.0;  // the confidence the calibrator consults
  bool degenerate_p_e = false;
};

// phi(lambda+, lambda-, p): positive above, negative below, abstain inside
// the closed band.
PseudoLabel pseudo_label_phi(double lambda_plus, double lambda_minus, double p);

// 1 iff exactly one probability exceeds lambda_plus.
int unique_positive_gate(const std::vector<double>& probabilities, double lambda_plus);

// Entropy-drop confidence: -p_mean ln p_mean + mean(p_t ln p_t), 0 ln 0 := 0.
// With full_binary_entropy both p and (1-p) terms are used.
double confidence_g(const std::vector<double>& probs, bool full_binary_entropy = false);

// Same functional form on the products p_e * p_t.
double confidence_g_tilde(const std::vector<double>& probs, double p_e,
                          bool full_binary_entropy = false);

inline double intent_confidence_gain(double g, double g_tilde) { return g_tilde - g; }

struct ScoringContext {
  const DualHeadModel* model = nullptr;
  const std::vector<std::string>* taxonomy = nullptr;
  EncoderConfig encoder;
  ThresholdConfig thresholds;
  bool force_augment = false;       // NoIcge behavior
  bool full_binary_entropy = false;
};

struct ScoredSample {
  ConfidenceRecord record;
  FeatureVector plain;
  FeatureVector augmented;  // input with predicted intents injected
  double mean_plain = 0.0;      // mean of the plain MC probabilities
  double mean_augmented = 0.0;  // mean of p_e * augmented MC probabilities
};

ScoredSample score_unlabeled(const ScoringContext& ctx, const DialogueSample& sample,
                             std::uint64_t seed);

// Per-group calibration: the five-threshold rules of the full method,
// with group-level positive uniqueness (groups with several would-be
// positives emit none; negatives are retained). Abstains are removed.
std::vector<std::pair<std::size_t, PseudoLabel>> calibrate_labels(
    const std::vector<ConfidenceRecord>& records, const ThresholdConfig& thresholds);

// Outer-thresholds-only selection: the whole group is skipped unless the
// unique-positive gate passes, then each sample gets phi(lambda+, lambda-, p).
std::vector<std::pair<std::size_t, PseudoLabel>> calibrate_labels_basic(
    const std::vector<double>& p_values, const ThresholdConfig& thresholds);

struct EvalMetrics {
  ClassificationMetrics cls;
  double map = 0.0;
  double r_at_1 = 0.0, r_at_2 = 0.0, r_at_5 = 0.0;
};

// Deterministic forward on the plain (non-augmented) input of every candidate.
EvalMetrics evaluate_model(const DualHeadModel& model,
                           const std::vector<CandidateGroup>& groups,
                           const std::vector<std::string>& taxonomy,
                           const EncoderConfig& encoder);

struct SelfTrainConfig {
  ThresholdConfig thresholds;
  TrainConfig train;
  ModelConfig model;
  EncoderConfig encoder;
  AblationMode mode = AblationMode::FullIcast;
  std::size_t rounds = 3;
  // 0: teacher uses train.epochs_per_round. The teacher sees far less data
  // than the students, so it often needs more passes over it.
  std::size_t teacher_epochs = 0;
  std::uint64_t seed = 42;
  bool warm_start_student = false;  // default: fresh student each round
  bool full_binary_entropy = false;
  std::size_t threads = 0;  // 0: hardware default, capped by ICAST_THREADS
};

struct PseudoEntry {
  std::int64_t group_id = 0;
  std::size_t sample_index = 0;
  int label = 0;
  bool augmented = false;
};

struct RoundRecord {
  std::size_t round = 0;  // 0 is the teacher
  std::size_t dp_size = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t augmented_count = 0;
  double mean_delta = 0.0;
  EvalMetrics validation;
  std::vector<PseudoEntry> pseudo;  // contents of D^p for this round
};

struct SelfTrainResult {
  DualHeadModel model;
  std::vector<RoundRecord> history;
};

SelfTrainResult run_self_training(const std::vector<CandidateGroup>& labeled,
                                  const std::vector<CandidateGroup>& unlabeled,
                                  const std::vector<CandidateGroup>& validation,
                                  const std::vector<std::string>& taxonomy,
                                  const SelfTrainConfig& cfg);

// Seed schedule shared with external reimplementations of the loop.
namespace seeds {
std::uint64_t teacher_init(std::uint64_t seed);
std::uint64_t teacher_train(std::uint64_t seed);
std::uint64_t student_init(std::uint64_t seed, std::size_t round);
std::uint64_t student_train(std::uint64_t seed, std::size_t round);
std::uint64_t scoring(std::uint64_t seed, std::size_t round, std::int64_t group_id,
                      std::size_t sample_index);
}  // namespace seeds

// Builders shared by the loop, evaluation and external tests.
// One example per input view: the plain pair (routed to L, carrying the
// intent targets when available) and, with intents, a second gold-augmented
// view routed to L-tilde.
std::vector<TrainExample> make_labeled_examples(const DialogueSample& sample,
                                                const std::vector<std::string>& taxonomy,
                                                const EncoderConfig& encoder,
                                                const ModelConfig& model,
                                                bool use_intents);
IntentTargets make_intent_targets(const DialogueSample& sample, const ModelConfig& model);

std::size_t resolve_thread_count(std::size_t requested);

}  // namespace icast

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icast/errors.hpp"

namespace icast {

enum class Speaker { User, Agent };

struct Utterance {
  Speaker speaker = Speaker::User;
  std::string text;
};

// Multi-label bit vector over the corpus taxonomy.
struct IntentAnnotation {
  std::vector<std::uint8_t> bits;  // size == taxonomy size

  bool any() const {
    for (auto b : bits)
      if (b) return true;
    return false;
  }
  bool operator==(const IntentAnnotation&) const = default;
};

// One context-candidate pair: the unit the classifier scores.
struct DialogueSample {
  std::vector<Utterance> context;
  std::string candidate;
  // When present: exactly one annotation per context utterance.
  std::optional<std::vector<IntentAnnotation>> intents;
  std::optional<int> answer_label;  // 0 or 1

  void validate(std::size_t taxonomy_size) const;
};

// One context with its candidate set (1 positive + k negatives when labeled).
struct CandidateGroup {
  std::int64_t group_id = 0;
  std::vector<DialogueSample> samples;
  std::optional<std::size_t> positive_index;
};

struct Corpus {
  std::vector<std::string> taxonomy;
  std::vector<CandidateGroup> labeled;    // D^l
  std::vector<CandidateGroup> unlabeled;  // D^u
  std::vector<CandidateGroup> validation;
  std::vector<CandidateGroup> test;
};

struct GeneratorConfig {
  std::size_t n_dialogues = 1000;
  // Row-stochastic over the taxonomy; empty means uniform.
  std::vector<std::vector<double>> intent_transition_matrix;
  std::vector<std::string> taxonomy = {"OQ", "RQ", "CQ", "FD", "FQ", "IR",
                                       "PA", "PF", "NF", "GG", "JK", "O"};
  std::size_t vocabulary_size = 1000;
  std::size_t min_turns = 2;
  std::size_t max_turns = 6;
  double intent_signal_strength = 0.9;  // coupling of answer text to final intent
  // Used only when the transition matrix is empty: probability that a turn
  // keeps the previous turn's intent (otherwise a fresh uniform draw).
  double intent_stickiness = 0.8;
  double cue_probability = 0.9;  // chance a turn surfaces its intent cue token
  std::uint64_t seed = 42;
  std::size_t negatives_per_group = 9;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;

  void validate() const;
};

Corpus generate_synthetic_corpus(const GeneratorConfig& config);

// Moves training groups between labeled/unlabeled at group granularity.
// Labels and intents are stripped from the unlabeled side.
Corpus split_corpus(const Corpus& corpus, double labeled_fraction, std::uint64_t seed);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

bool corpus_equal(const Corpus& a, const Corpus& b);

}  // namespace icast

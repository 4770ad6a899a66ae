#include "icast/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "icast/rng.hpp"

namespace icast {

void DialogueSample::validate(std::size_t taxonomy_size) const {
  for (const auto& u : context) {
    auto first = u.text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos)
      throw ContractViolation("utterance text empty after trimming");
  }
  if (intents) {
    if (intents->size() != context.size())
      throw ContractViolation("intents must align 1:1 with context utterances");
    for (const auto& ann : *intents) {
      if (ann.bits.size() != taxonomy_size)
        throw ContractViolation("intent vector length != taxonomy size");
      if (!ann.any())
        throw ContractViolation("annotated utterance has no intent label set");
    }
  }
  if (answer_label && *answer_label != 0 && *answer_label != 1)
    throw ContractViolation("answer_label must be 0 or 1");
}

void GeneratorConfig::validate() const {
  if (taxonomy.empty()) throw ConfigError("taxonomy must be non-empty");
  if (vocabulary_size == 0) throw ConfigError("vocabulary_size must be > 0");
  if (intent_signal_strength < 0.0 || intent_signal_strength > 1.0)
    throw ConfigError("intent_signal_strength must lie in [0,1]");
  if (min_turns < 1 || max_turns < min_turns)
    throw ConfigError("invalid turns range");
  if (intent_stickiness < 0.0 || intent_stickiness > 1.0)
    throw ConfigError("intent_stickiness must lie in [0,1]");
  if (cue_probability < 0.0 || cue_probability > 1.0)
    throw ConfigError("cue_probability must lie in [0,1]");
  if (validation_fraction < 0.0 || test_fraction < 0.0 ||
      validation_fraction + test_fraction >= 1.0)
    throw ConfigError("validation/test fractions must be >= 0 and sum to < 1");
  if (!intent_transition_matrix.empty()) {
    if (intent_transition_matrix.size() != taxonomy.size())
      throw ConfigError("transition matrix must be square over the taxonomy");
    for (const auto& row : intent_transition_matrix) {
      if (row.size() != taxonomy.size())
        throw ConfigError("transition matrix must be square over the taxonomy");
      double sum = 0.0;
      for (double v : row) {
        if (v < 0.0) throw ConfigError("transition probabilities must be >= 0");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("transition matrix rows must sum to 1");
    }
  }
}

namespace {

bool sample_equal(const DialogueSample& a, const DialogueSample& b) {
  if (a.context.size() != b.context.size()) return false;
  for (std::size_t i = 0; i < a.context.size(); ++i)
    if (a.context[i].speaker != b.context[i].speaker ||
        a.context[i].text != b.context[i].text)
      return false;
  return a.candidate == b.candidate && a.intents == b.intents &&
         a.answer_label == b.answer_label;
}

bool groups_equal(const std::vector<CandidateGroup>& a,
                  const std::vector<CandidateGroup>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].group_id != b[i].group_id ||
        a[i].positive_index != b[i].positive_index ||
        a[i].samples.size() != b[i].samples.size())
      return false;
    for (std::size_t j = 0; j < a[i].samples.size(); ++j)
      if (!sample_equal(a[i].samples[j], b[i].samples[j])) return false;
  }
  return true;
}

}  // namespace

bool corpus_equal(const Corpus& a, const Corpus& b) {
  return a.taxonomy == b.taxonomy && groups_equal(a.labeled, b.labeled) &&
         groups_equal(a.unlabeled, b.unlabeled) &&
         groups_equal(a.validation, b.validation) && groups_equal(a.test, b.test);
}

Corpus split_corpus(const Corpus& corpus, double labeled_fraction, std::uint64_t seed) {
  if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
    throw ConfigError("labeled_fraction must lie in (0,1]");

  // All training groups, regardless of their current partition.
  std::vector<CandidateGroup> training = corpus.labeled;
  training.insert(training.end(), corpus.unlabeled.begin(), corpus.unlabeled.end());
  std::sort(training.begin(), training.end(),
            [](const CandidateGroup& a, const CandidateGroup& b) {
              return a.group_id < b.group_id;
            });

  std::vector<std::size_t> order(training.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x51a7));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_index(i)]);

  const std::size_t n_labeled = static_cast<std::size_t>(
      std::llround(labeled_fraction * static_cast<double>(training.size())));

  Corpus out;
  out.taxonomy = corpus.taxonomy;
  out.validation = corpus.validation;
  out.test = corpus.test;
  std::unordered_set<std::size_t> labeled_idx;
  for (std::size_t i = 0; i < n_labeled && i < order.size(); ++i)
    labeled_idx.insert(order[i]);
  for (std::size_t i = 0; i < training.size(); ++i) {
    if (labeled_idx.count(i)) {
      out.labeled.push_back(training[i]);
    } else {
      CandidateGroup g = training[i];
      g.positive_index.reset();
      for (auto& s : g.samples) {
        s.intents.reset();
        s.answer_label.reset();
      }
      out.unlabeled.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace icast

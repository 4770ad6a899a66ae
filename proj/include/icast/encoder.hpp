#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "icast/corpus.hpp"

namespace icast {

// Reserved boundary/intent markers. tokenize() lowercases and strips
// non-alphanumerics, so raw text can never produce these spellings.
inline const std::string kBeginToken = "⟨begin⟩";  // sequence start
inline const std::string kSepToken = "⟨sep⟩";      // context/answer separator

// One reserved token per intent label, spelled ⟨LABEL⟩.
std::string intent_token(const std::string& label);

struct EncoderConfig {
  std::size_t max_turns = 4;
  std::size_t max_context_tokens = 400;
  std::size_t max_answer_tokens = 100;
  std::size_t feature_dim = 4096;  // power of two >= 256
};

using TokenSequence = std::vector<std::string>;

// Lowercase, split on whitespace and punctuation, punctuation discarded.
std::vector<std::string> tokenize(const std::string& text);

// [BEGIN; u; (intents); SEP; a], keeping the last max_turns utterances.
// Context tokens are truncated from the front (oldest dropped), the answer
// from the back. Intents, when present, must align 1:1 with the context.
TokenSequence assemble_answer_input(
    const std::vector<Utterance>& context,
    const std::optional<std::vector<IntentAnnotation>>& intents,
    const std::string& candidate, const std::vector<std::string>& taxonomy,
    const EncoderConfig& cfg);

// [u1; e1; ...; un; SEP] with intents covering a prefix of the context.
TokenSequence assemble_intent_input(const std::vector<Utterance>& context,
                                    const std::vector<IntentAnnotation>& intents_prefix,
                                    const std::vector<std::string>& taxonomy,
                                    const EncoderConfig& cfg);

// Sparse L2-normalized bag of hashed unigrams + adjacent bigrams.
// Semantically a dense vector of dimension `dim`; only nonzero buckets stored.
struct FeatureVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, float>> entries;  // sorted by bucket

  std::vector<float> dense() const;
  bool operator==(const FeatureVector&) const = default;
};

FeatureVector featurize(const TokenSequence& seq, std::size_t dim);

}  // namespace icast

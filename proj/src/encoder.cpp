#include "icast/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "icast/errors.hpp"

namespace icast {

std::string intent_token(const std::string& label) {
  return "⟨" + label + "⟩";
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

namespace {

bool is_power_of_two(std::size_t x) { return x != 0 && (x & (x - 1)) == 0; }

// Utterance tokens with intent marker tokens appended, for the kept window.
std::vector<std::string> context_tokens(
    const std::vector<Utterance>& context,
    const std::vector<const IntentAnnotation*>& intent_for_utterance,
    const std::vector<std::string>& taxonomy, std::size_t max_turns) {
  const std::size_t start = context.size() > max_turns ? context.size() - max_turns : 0;
  std::vector<std::string> out;
  for (std::size_t i = start; i < context.size(); ++i) {
    auto toks = tokenize(context[i].text);
    out.insert(out.end(), toks.begin(), toks.end());
    if (const IntentAnnotation* ann = intent_for_utterance[i]) {
      for (std::size_t l = 0; l < ann->bits.size(); ++l)
        if (ann->bits[l]) out.push_back(intent_token(taxonomy[l]));
    }
  }
  return out;
}

// Keep the trailing max_len tokens (most recent context).
void truncate_front(std::vector<std::string>& tokens, std::size_t max_len) {
  if (tokens.size() > max_len)
    tokens.erase(tokens.begin(), tokens.end() - static_cast<long>(max_len));
}

}  // namespace

TokenSequence assemble_answer_input(
    const std::vector<Utterance>& context,
    const std::optional<std::vector<IntentAnnotation>>& intents,
    const std::string& candidate, const std::vector<std::string>& taxonomy,
    const EncoderConfig& cfg) {
  std::vector<const IntentAnnotation*> per_utt(context.size(), nullptr);
  if (intents) {
    if (intents->size() != context.size())
      throw ContractViolation("assemble_answer_input: intents misaligned with context");
    for (std::size_t i = 0; i < context.size(); ++i) per_utt[i] = &(*intents)[i];
  }
  auto ctx = context_tokens(context, per_utt, taxonomy, cfg.max_turns);
  truncate_front(ctx, cfg.max_context_tokens);

  auto ans = tokenize(candidate);
  if (ans.size() > cfg.max_answer_tokens) ans.resize(cfg.max_answer_tokens);

  TokenSequence seq;
  seq.reserve(ctx.size() + ans.size() + 2);
  seq.push_back(kBeginToken);
  seq.insert(seq.end(), ctx.begin(), ctx.end());
  seq.push_back(kSepToken);
  seq.insert(seq.end(), ans.begin(), ans.end());
  return seq;
}

TokenSequence assemble_intent_input(const std::vector<Utterance>& context,
                                    const std::vector<IntentAnnotation>& intents_prefix,
                                    const std::vector<std::string>& taxonomy,
                                    const EncoderConfig& cfg) {
  if (intents_prefix.size() > context.size())
    throw ContractViolation("assemble_intent_input: intent prefix longer than context");
  std::vector<const IntentAnnotation*> per_utt(context.size(), nullptr);
  for (std::size_t i = 0; i < intents_prefix.size(); ++i)
    per_utt[i] = &intents_prefix[i];
  auto ctx = context_tokens(context, per_utt, taxonomy, cfg.max_turns);
  truncate_front(ctx, cfg.max_context_tokens);
  ctx.push_back(kSepToken);
  return ctx;
}

namespace {

// FNV-1a, 64-bit. Fixed and seedless so features agree across processes.
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<float> FeatureVector::dense() const {
  std::vector<float> v(dim, 0.0f);
  for (const auto& [idx, val] : entries) v[idx] = val;
  return v;
}

FeatureVector featurize(const TokenSequence& seq, std::size_t dim) {
  if (!is_power_of_two(dim) || dim < 256)
    throw ContractViolation("featurize: dimension must be a power of two >= 256");
  std::map<std::uint32_t, float> counts;
  const std::uint64_t mask = dim - 1;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    counts[static_cast<std::uint32_t>(fnv1a(seq[i]) & mask)] += 1.0f;
    if (i + 1 < seq.size()) {
      // bigram: hash of "a\x1fb"
      std::uint64_t h = fnv1a(seq[i + 1], fnv1a("\x1f", fnv1a(seq[i])));
      counts[static_cast<std::uint32_t>(h & mask)] += 1.0f;
    }
  }
  double norm_sq = 0.0;
  for (const auto& [idx, c] : counts) norm_sq += static_cast<double>(c) * c;
  const float inv_norm = norm_sq > 0.0 ? static_cast<float>(1.0 / std::sqrt(norm_sq)) : 0.0f;

  FeatureVector fv;
  fv.dim = dim;
  fv.entries.reserve(counts.size());
  for (const auto& [idx, c] : counts) fv.entries.emplace_back(idx, c * inv_norm);
  return fv;
}

}  // namespace icast

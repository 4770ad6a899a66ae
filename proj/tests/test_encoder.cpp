#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "icast/encoder.hpp"
#include "icast/errors.hpp"

using namespace icast;

namespace {

std::vector<Utterance> make_context(const std::vector<std::string>& texts) {
  std::vector<Utterance> ctx;
  for (std::size_t i = 0; i < texts.size(); ++i)
    ctx.push_back({i % 2 == 0 ? Speaker::User : Speaker::Agent, texts[i]});
  return ctx;
}

double l2(const FeatureVector& fv) {
  double s = 0.0;
  for (const auto& [idx, v] : fv.entries) s += double(v) * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on punctuation") {
  CHECK(tokenize("Can you send me a website?") ==
        std::vector<std::string>{"can", "you", "send", "me", "a", "website"});
  CHECK(tokenize("  A--b..C ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("...") == std::vector<std::string>{});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("x2 y3") == std::vector<std::string>{"x2", "y3"});
}

TEST_CASE("reserved tokens cannot be produced from raw text") {
  // The markers contain multi-byte angle brackets, which tokenize strips.
  for (const auto& tok : {kBeginToken, kSepToken, intent_token("OQ")}) {
    const auto round_trip = tokenize(tok);
    for (const auto& t : round_trip) CHECK(t != tok);
  }
  CHECK(tokenize(kSepToken) == std::vector<std::string>{"sep"});
  CHECK(intent_token("PA") == "⟨PA⟩");
}

TEST_CASE("assemble_answer_input layout without intents") {
  EncoderConfig cfg;
  auto seq = assemble_answer_input(make_context({"hello there", "general reply"}),
                                   std::nullopt, "the answer", {"OQ"}, cfg);
  CHECK(seq == TokenSequence{kBeginToken, "hello", "there", "general", "reply",
                             kSepToken, "the", "answer"});
}

TEST_CASE("assemble_answer_input injects intent tokens after each utterance") {
  EncoderConfig cfg;
  std::vector<IntentAnnotation> intents(2);
  intents[0].bits = {1, 0};
  intents[1].bits = {0, 1};
  auto seq = assemble_answer_input(make_context({"q one", "a two"}), intents, "ans",
                                   {"OQ", "PA"}, cfg);
  CHECK(seq == TokenSequence{kBeginToken, "q", "one", intent_token("OQ"), "a",
                             "two", intent_token("PA"), kSepToken, "ans"});
}

TEST_CASE("assemble_answer_input keeps only the last max_turns utterances") {
  EncoderConfig cfg;
  cfg.max_turns = 4;
  auto seq = assemble_answer_input(
      make_context({"u1", "u2", "u3", "u4", "u5", "u6"}), std::nullopt, "ans",
      {}, cfg);
  CHECK(seq == TokenSequence{kBeginToken, "u3", "u4", "u5", "u6", kSepToken, "ans"});
}

TEST_CASE("context truncates from the front, answer from the back") {
  EncoderConfig cfg;
  cfg.max_turns = 4;
  cfg.max_context_tokens = 3;
  cfg.max_answer_tokens = 2;
  auto seq = assemble_answer_input(make_context({"a b c d e"}), std::nullopt,
                                   "x y z", {}, cfg);
  // The most recent context tokens survive; the answer keeps its head.
  CHECK(seq == TokenSequence{kBeginToken, "c", "d", "e", kSepToken, "x", "y"});
}

TEST_CASE("assemble_answer_input rejects misaligned intents") {
  EncoderConfig cfg;
  std::vector<IntentAnnotation> intents(1);
  intents[0].bits = {1};
  CHECK_THROWS_AS(assemble_answer_input(make_context({"a", "b"}), intents, "x",
                                        {"OQ"}, cfg),
                  ContractViolation);
}

TEST_CASE("assemble_intent_input covers a prefix and ends with the separator") {
  EncoderConfig cfg;
  std::vector<IntentAnnotation> prefix(1);
  prefix[0].bits = {1};
  auto seq = assemble_intent_input(make_context({"first turn", "second turn"}),
                                   prefix, {"OQ"}, cfg);
  CHECK(seq == TokenSequence{"first", "turn", intent_token("OQ"), "second",
                             "turn", kSepToken});
  CHECK_THROWS_AS(assemble_intent_input(make_context({"one"}),
                                        std::vector<IntentAnnotation>(2), {"OQ"},
                                        cfg),
                  ContractViolation);
}

TEST_CASE("featurize: unit norm, determinism, and sorted sparse entries") {
  auto fv = featurize({"alpha", "beta", "gamma", "alpha"}, 512);
  CHECK(fv.dim == 512);
  CHECK(l2(fv) == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t i = 1; i < fv.entries.size(); ++i)
    CHECK(fv.entries[i - 1].first < fv.entries[i].first);
  CHECK(fv == featurize({"alpha", "beta", "gamma", "alpha"}, 512));

  auto dense = fv.dense();
  CHECK(dense.size() == 512);
  double s = 0.0;
  for (float v : dense) s += double(v) * v;
  CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("featurize: empty input yields an all-zero vector") {
  auto fv = featurize({}, 256);
  CHECK(fv.entries.empty());
  CHECK(fv.dense() == std::vector<float>(256, 0.0f));
}

TEST_CASE("featurize: bigrams are order sensitive") {
  // Same unigrams, different adjacency: the bigram buckets must differ.
  auto ab = featurize({"aa", "bb", "cc"}, 4096);
  auto ba = featurize({"bb", "aa", "cc"}, 4096);
  CHECK(ab != ba);
}

TEST_CASE("featurize: counts follow a brute-force unigram+bigram oracle") {
  // Two occurrences of the same unigram must produce double the weight of a
  // singleton before normalization; verify via the ratio after normalization.
  auto fv = featurize({"xx", "yy", "xx", "zz", "qq", "rr"}, 4096);
  float wxx = 0.0f, wyy = 0.0f;
  const auto dense = fv.dense();
  // Recompute bucket positions with an independent FNV-1a implementation.
  auto fnv = [](const std::string& s, std::uint64_t h) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  };
  const std::uint64_t basis = 0xcbf29ce484222325ULL;
  wxx = dense[fnv("xx", basis) & 4095];
  wyy = dense[fnv("yy", basis) & 4095];
  CHECK(wxx == doctest::Approx(2.0f * wyy).epsilon(1e-5));
}

TEST_CASE("featurize rejects invalid dimensions") {
  CHECK_THROWS_AS(featurize({"a"}, 0), ContractViolation);
  CHECK_THROWS_AS(featurize({"a"}, 300), ContractViolation);
  CHECK_THROWS_AS(featurize({"a"}, 128), ContractViolation);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "icast/corpus.hpp"
#include "icast/errors.hpp"
#include "icast/rng.hpp"
#include "icast/selftrain.hpp"

using namespace icast;

namespace {

ThresholdConfig default_thresholds() { return ThresholdConfig{}; }

ConfidenceRecord record(double p_bar, double g_used) {
  ConfidenceRecord r;
  r.p_bar = p_bar;
  r.g_used = g_used;
  return r;
}

DialogueSample make_sample(std::vector<std::string> turns, std::string candidate,
                           std::optional<std::vector<std::size_t>> intent_ids,
                           std::size_t taxonomy_size, std::optional<int> label) {
  DialogueSample s;
  for (std::size_t i = 0; i < turns.size(); ++i)
    s.context.push_back({i % 2 == 0 ? Speaker::User : Speaker::Agent, turns[i]});
  s.candidate = std::move(candidate);
  if (intent_ids) {
    std::vector<IntentAnnotation> anns;
    for (std::size_t id : *intent_ids) {
      IntentAnnotation a;
      a.bits.assign(taxonomy_size, 0);
      a.bits[id] = 1;
      anns.push_back(std::move(a));
    }
    s.intents = std::move(anns);
  }
  s.answer_label = label;
  return s;
}

}  // namespace

TEST_CASE("pseudo_label_phi: positive above, negative below, abstain in the closed band") {
  CHECK(pseudo_label_phi(0.8, 0.1, 0.9) == PseudoLabel::Positive);
  CHECK(pseudo_label_phi(0.8, 0.1, 0.05) == PseudoLabel::Negative);
  CHECK(pseudo_label_phi(0.8, 0.1, 0.5) == PseudoLabel::Abstain);
  // Band edges are inclusive -> abstain.
  CHECK(pseudo_label_phi(0.8, 0.1, 0.8) == PseudoLabel::Abstain);
  CHECK(pseudo_label_phi(0.8, 0.1, 0.1) == PseudoLabel::Abstain);
}

TEST_CASE("unique_positive_gate counts strict exceedances") {
  CHECK(unique_positive_gate({0.9, 0.1, 0.2}, 0.8) == 1);
  CHECK(unique_positive_gate({0.9, 0.85, 0.2}, 0.8) == 0);
  CHECK(unique_positive_gate({0.1, 0.2, 0.3}, 0.8) == 0);
  CHECK(unique_positive_gate({0.8}, 0.8) == 0);  // exactly at threshold: not above
  CHECK_THROWS_AS(unique_positive_gate({}, 0.8), ContractViolation);
}

TEST_CASE("confidence_g reference values") {
  CHECK(confidence_g({0.2, 0.8}) == doctest::Approx(0.096372).epsilon(1e-4));
  CHECK(confidence_g({0.0, 1.0}) == doctest::Approx(0.346574).epsilon(1e-4));
  // Equal samples: mean entropy term cancels the pooled one exactly.
  CHECK(confidence_g({0.3, 0.3, 0.3}) == 0.0);
  CHECK(confidence_g({0.0, 0.0}) == 0.0);
  CHECK(confidence_g({1.0}) == 0.0);
  CHECK_THROWS_AS(confidence_g({}), ContractViolation);
}

TEST_CASE("confidence_g is non-negative on random vectors") {
  Rng rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> p;
    const std::size_t T = 1 + rng.next_index(10);
    for (std::size_t t = 0; t < T; ++t) p.push_back(rng.next_double());
    CHECK(confidence_g(p) >= 0.0);
    CHECK(confidence_g(p, true) >= 0.0);
    CHECK(confidence_g_tilde(p, rng.next_double()) >= 0.0);
  }
}

TEST_CASE("confidence_g_tilde scales the samples by p_e") {
  const std::vector<double> p = {0.2, 0.8};
  CHECK(confidence_g_tilde(p, 1.0) == confidence_g(p));
  CHECK(confidence_g_tilde(p, 0.5) == confidence_g({0.1, 0.4}));
  CHECK(confidence_g_tilde(p, 0.0) == 0.0);  // all products vanish
}

TEST_CASE("threshold ordering is validated") {
  CHECK_NOTHROW(default_thresholds().validate());
  ThresholdConfig bad = default_thresholds();
  bad.lambda_minus = 0.6;  // breaks lambda- < lambda~-
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = default_thresholds();
  bad.lambda_plus = 0.4;  // breaks lambda~+ < lambda+
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = default_thresholds();
  bad.lambda_h = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = default_thresholds();
  bad.T = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("calibrate_labels: outer band, mid band and confidence gate") {
  const auto th = default_thresholds();  // 0.8 / 0.1 / 0.5 / 0.5 / 0.2
  // Outer positive and outer negative pass straight through.
  auto labels = calibrate_labels({record(0.9, 0.0), record(0.05, 0.0)}, th);
  REQUIRE(labels.size() == 2);
  CHECK(labels[0] == std::pair<std::size_t, PseudoLabel>{0, PseudoLabel::Positive});
  CHECK(labels[1] == std::pair<std::size_t, PseudoLabel>{1, PseudoLabel::Negative});

  // Mid band admitted only with g_used above lambda_h.
  labels = calibrate_labels({record(0.6, 0.25)}, th);
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].second == PseudoLabel::Positive);
  CHECK(calibrate_labels({record(0.6, 0.1)}, th).empty());   // gate fails: dropped
  CHECK(calibrate_labels({record(0.5, 0.25)}, th).empty());  // inner abstain point
  labels = calibrate_labels({record(0.9, 0.0), record(0.3, 0.25)}, th);
  REQUIRE(labels.size() == 2);
  CHECK(labels[1].second == PseudoLabel::Negative);  // mid-band negative
}

TEST_CASE("calibrate_labels: a group with no positive contributes nothing") {
  const auto th = default_thresholds();
  // Negatives are emitted only alongside a positive anchor.
  CHECK(calibrate_labels({record(0.05, 0.0)}, th).empty());
  CHECK(calibrate_labels({record(0.3, 0.25), record(0.02, 0.0)}, th).empty());
}

TEST_CASE("calibrate_labels: duplicate positives are suppressed, negatives kept") {
  const auto th = default_thresholds();
  auto labels = calibrate_labels({record(0.9, 0.0), record(0.95, 0.0), record(0.02, 0.0)}, th);
  REQUIRE(labels.size() == 1);
  CHECK(labels[0] == std::pair<std::size_t, PseudoLabel>{2, PseudoLabel::Negative});
  // An outer and a mid-band positive also collide.
  labels = calibrate_labels({record(0.9, 0.0), record(0.6, 0.3), record(0.02, 0.0)}, th);
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].second == PseudoLabel::Negative);
}

TEST_CASE("calibrate_labels_basic skips the whole group unless the gate passes") {
  const auto th = default_thresholds();
  CHECK(calibrate_labels_basic({0.9, 0.85, 0.02}, th).empty());
  CHECK(calibrate_labels_basic({0.5, 0.4, 0.02}, th).empty());
  auto labels = calibrate_labels_basic({0.9, 0.5, 0.02}, th);
  REQUIRE(labels.size() == 2);  // the 0.5 entry abstains
  CHECK(labels[0] == std::pair<std::size_t, PseudoLabel>{0, PseudoLabel::Positive});
  CHECK(labels[1] == std::pair<std::size_t, PseudoLabel>{2, PseudoLabel::Negative});
}

TEST_CASE("make_intent_targets aligns annotations to the kept window") {
  ModelConfig mc;
  mc.feature_dim = 256;
  mc.hidden_dim = 4;
  mc.max_turns = 2;
  mc.taxonomy_size = 3;
  // Three turns, window of two: the first annotation falls out of the window.
  auto s = make_sample({"a", "b", "c"}, "x", std::vector<std::size_t>{0, 1, 2}, 3, 1);
  auto tgt = make_intent_targets(s, mc);
  REQUIRE(tgt.values.size() == 6);
  REQUIRE(tgt.row_mask == std::vector<std::uint8_t>{1, 1});
  CHECK(tgt.values == std::vector<double>{0, 1, 0, 0, 0, 1});
  // Single turn: only the first row is live.
  s = make_sample({"a"}, "x", std::vector<std::size_t>{2}, 3, 1);
  tgt = make_intent_targets(s, mc);
  CHECK(tgt.row_mask == std::vector<std::uint8_t>{1, 0});
  CHECK(tgt.values == std::vector<double>{0, 0, 1, 0, 0, 0});
  s.intents.reset();
  CHECK_THROWS_AS(make_intent_targets(s, mc), ContractViolation);
}

TEST_CASE("make_labeled_examples emits a plain view plus a gold-augmented view") {
  ModelConfig mc;
  mc.feature_dim = 256;
  mc.hidden_dim = 4;
  mc.max_turns = 2;
  mc.taxonomy_size = 3;
  EncoderConfig enc;
  enc.max_turns = 2;
  const std::vector<std::string> tax = {"OQ", "RQ", "CQ"};
  auto s = make_sample({"hello there", "general reply"}, "answer text",
                       std::vector<std::size_t>{0, 1}, 3, 1);

  auto with = make_labeled_examples(s, tax, enc, mc, true);
  REQUIRE(with.size() == 2);
  CHECK(with[0].intent_targets.has_value());
  CHECK(!with[0].augmented.has_value());
  CHECK(with[0].answer_label == 1.0);
  CHECK(!with[1].intent_targets.has_value());
  REQUIRE(with[1].augmented.has_value());
  CHECK(with[1].answer_label == 1.0);
  // The augmented view really differs (intent tokens were injected).
  CHECK(with[1].augmented->entries != with[1].plain.entries);
  CHECK(with[1].plain.entries == with[0].plain.entries);

  auto without = make_labeled_examples(s, tax, enc, mc, false);
  REQUIRE(without.size() == 1);
  CHECK(!without[0].intent_targets.has_value());
  CHECK(!without[0].augmented.has_value());
}

TEST_CASE("score_unlabeled is a pure function of model, sample and seed") {
  ModelConfig mc;
  mc.feature_dim = 512;
  mc.hidden_dim = 8;
  mc.max_turns = 2;
  mc.taxonomy_size = 3;
  ScoringContext ctx;
  const auto model = init_model(mc, 5);
  const std::vector<std::string> tax = {"OQ", "RQ", "CQ"};
  ctx.model = &model;
  ctx.taxonomy = &tax;
  ctx.encoder.max_turns = 2;

  const auto s = make_sample({"one two", "three four"}, "five six", std::nullopt, 3,
                             std::nullopt);
  const auto a = score_unlabeled(ctx, s, 99);
  const auto b = score_unlabeled(ctx, s, 99);
  CHECK(a.record.p_bar == b.record.p_bar);
  CHECK(a.record.g == b.record.g);
  CHECK(a.record.g_tilde == b.record.g_tilde);
  CHECK(a.record.delta == a.record.g_tilde - a.record.g);
  CHECK(a.record.g >= 0.0);
  CHECK(a.record.g_tilde >= 0.0);
  CHECK(a.record.p_e > 0.0);
  CHECK(a.record.p_e <= 1.0);
  const auto c = score_unlabeled(ctx, s, 100);
  // A different seed draws different dropout masks.
  CHECK(a.record.g != c.record.g);

  ScoringContext forced = ctx;
  forced.force_augment = true;
  const auto d = score_unlabeled(forced, s, 99);
  CHECK(d.record.intents_selected);
  CHECK(d.record.p_bar == d.mean_augmented);
}

TEST_CASE("run_self_training on a tiny corpus: shapes, determinism, empty D^u") {
  GeneratorConfig gen;
  gen.n_dialogues = 60;
  gen.vocabulary_size = 80;
  Corpus corpus = split_corpus(generate_synthetic_corpus(gen), 0.5, 3);

  SelfTrainConfig cfg;
  cfg.model.feature_dim = 512;
  cfg.model.hidden_dim = 8;
  cfg.train.epochs_per_round = 2;
  cfg.rounds = 2;
  cfg.seed = 11;
  cfg.threads = 1;

  auto res = run_self_training(corpus.labeled, corpus.unlabeled, corpus.validation,
                               corpus.taxonomy, cfg);
  REQUIRE(res.history.size() == 3);  // teacher + two rounds
  CHECK(res.history[0].round == 0);
  CHECK(res.history[0].dp_size == 0);
  for (std::size_t r = 1; r < res.history.size(); ++r) {
    const auto& rec = res.history[r];
    CHECK(rec.round == r);
    CHECK(rec.positives + rec.negatives == rec.dp_size);
    CHECK(rec.pseudo.size() == rec.dp_size);
  }

  // Same config, same seed: identical pseudo sets and identical weights.
  auto res2 = run_self_training(corpus.labeled, corpus.unlabeled, corpus.validation,
                                corpus.taxonomy, cfg);
  for (std::size_t r = 0; r < res.history.size(); ++r) {
    REQUIRE(res.history[r].pseudo.size() == res2.history[r].pseudo.size());
    for (std::size_t i = 0; i < res.history[r].pseudo.size(); ++i) {
      CHECK(res.history[r].pseudo[i].group_id == res2.history[r].pseudo[i].group_id);
      CHECK(res.history[r].pseudo[i].sample_index == res2.history[r].pseudo[i].sample_index);
      CHECK(res.history[r].pseudo[i].label == res2.history[r].pseudo[i].label);
    }
  }
  CHECK(res.model.trunk_w == res2.model.trunk_w);

  // No unlabeled data: the teacher itself is returned after round 0.
  auto teacher_only = run_self_training(corpus.labeled, {}, corpus.validation,
                                        corpus.taxonomy, cfg);
  CHECK(teacher_only.history.size() == 1);

  CHECK_THROWS_AS(run_self_training({}, corpus.unlabeled, corpus.validation,
                                    corpus.taxonomy, cfg),
                  ContractViolation);
}

TEST_CASE("ablation mode names round-trip") {
  for (auto m : {AblationMode::FullIcast, AblationMode::NoIcge, AblationMode::NoIcgeNoAlc,
                 AblationMode::NoIg})
    CHECK(parse_ablation_mode(ablation_mode_name(m)) == m);
  CHECK_THROWS_AS(parse_ablation_mode("bogus"), ConfigError);
}

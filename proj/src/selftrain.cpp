#include "icast/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "icast/rng.hpp"

namespace icast {

void ThresholdConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(lambda_plus) || !in_unit(lambda_minus) || !in_unit(lambda_tilde_plus) ||
      !in_unit(lambda_tilde_minus) || !in_unit(lambda_h))
    throw ConfigError("calibration thresholds must lie in [0,1]");
  if (!(lambda_minus < lambda_tilde_minus && lambda_tilde_minus <= lambda_tilde_plus &&
        lambda_tilde_plus < lambda_plus))
    throw ConfigError(
        "threshold ordering violated: need lambda- < lambda~- <= lambda~+ < lambda+");
  if (T < 1) throw ConfigError("T must be >= 1");
}

const char* ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::FullIcast: return "full_icast";
    case AblationMode::NoIcge: return "no_icge";
    case AblationMode::NoIcgeNoAlc: return "no_icge_no_alc";
    case AblationMode::NoIg: return "no_ig";
  }
  return "unknown";
}

AblationMode parse_ablation_mode(const std::string& name) {
  if (name == "full_icast") return AblationMode::FullIcast;
  if (name == "no_icge") return AblationMode::NoIcge;
  if (name == "no_icge_no_alc") return AblationMode::NoIcgeNoAlc;
  if (name == "no_ig") return AblationMode::NoIg;
  throw ConfigError("unknown ablation mode: " + name);
}

PseudoLabel pseudo_label_phi(double lambda_plus, double lambda_minus, double p) {
  if (p > lambda_plus) return PseudoLabel::Positive;
  if (p < lambda_minus) return PseudoLabel::Negative;
  return PseudoLabel::Abstain;
}

int unique_positive_gate(const std::vector<double>& probabilities, double lambda_plus) {
  if (probabilities.empty()) throw ContractViolation("unique_positive_gate: empty group");
  std::size_t above = 0;
  for (double p : probabilities)
    if (p > lambda_plus) ++above;
  return above == 1 ? 1 : 0;
}

namespace {

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

double entropy_term(double p, bool full) {
  // The method's one-sided form by default; full adds the (1-p) term.
  return full ? plogp(p) + plogp(1.0 - p) : plogp(p);
}

}  // namespace

double confidence_g(const std::vector<double>& probs, bool full_binary_entropy) {
  if (probs.empty()) throw ContractViolation("confidence_g: empty sample list");
  // Identical samples have zero Jensen gap by definition; short-circuit so the
  // result is exactly 0 rather than a rounding residue of the mean.
  if (std::all_of(probs.begin(), probs.end(), [&](double p) { return p == probs[0]; }))
    return 0.0;
  double mean = 0.0;
  for (double p : probs) mean += p;
  mean /= static_cast<double>(probs.size());
  double mean_plogp = 0.0;
  for (double p : probs) mean_plogp += entropy_term(p, full_binary_entropy);
  mean_plogp /= static_cast<double>(probs.size());
  return -entropy_term(mean, full_binary_entropy) + mean_plogp;
}

double confidence_g_tilde(const std::vector<double>& probs, double p_e,
                          bool full_binary_entropy) {
  if (p_e == 0.0) return 0.0;  // degenerate: all products vanish
  std::vector<double> scaled;
  scaled.reserve(probs.size());
  for (double p : probs) scaled.push_back(p_e * p);
  return confidence_g(scaled, full_binary_entropy);
}

namespace {

// Intent rows cover the kept context window, oldest kept turn first.
std::size_t kept_turns(std::size_t context_len, std::size_t max_turns) {
  return std::min(context_len, max_turns);
}

}  // namespace

IntentTargets make_intent_targets(const DialogueSample& sample, const ModelConfig& model) {
  if (!sample.intents) throw ContractViolation("make_intent_targets: sample has no intents");
  IntentTargets tgt;
  tgt.values.assign(model.intent_out(), 0.0);
  tgt.row_mask.assign(model.max_turns, 0);
  const std::size_t n = kept_turns(sample.context.size(), model.max_turns);
  const std::size_t start = sample.context.size() - n;
  for (std::size_t i = 0; i < n; ++i) {
    tgt.row_mask[i] = 1;
    const auto& bits = (*sample.intents)[start + i].bits;
    for (std::size_t l = 0; l < model.taxonomy_size && l < bits.size(); ++l)
      tgt.values[i * model.taxonomy_size + l] = bits[l] ? 1.0 : 0.0;
  }
  return tgt;
}

std::vector<TrainExample> make_labeled_examples(const DialogueSample& sample,
                                                const std::vector<std::string>& taxonomy,
                                                const EncoderConfig& encoder,
                                                const ModelConfig& model,
                                                bool use_intents) {
  std::vector<TrainExample> out;
  TrainExample ex;
  ex.plain = featurize(
      assemble_answer_input(sample.context, std::nullopt, sample.candidate, taxonomy, encoder),
      model.feature_dim);
  if (sample.answer_label) ex.answer_label = static_cast<double>(*sample.answer_label);
  if (use_intents && sample.intents) {
    ex.intent_targets = make_intent_targets(sample, model);
    // Second view: the same pair with gold intents injected, routed to L-tilde.
    TrainExample aug;
    aug.plain = ex.plain;
    aug.augmented = featurize(assemble_answer_input(sample.context, sample.intents,
                                                    sample.candidate, taxonomy, encoder),
                              model.feature_dim);
    aug.answer_label = ex.answer_label;
    out.push_back(std::move(ex));
    out.push_back(std::move(aug));
  } else {
    out.push_back(std::move(ex));
  }
  return out;
}

ScoredSample score_unlabeled(const ScoringContext& ctx, const DialogueSample& sample,
                             std::uint64_t seed) {
  const DualHeadModel& model = *ctx.model;
  const auto& taxonomy = *ctx.taxonomy;
  const std::size_t T = ctx.thresholds.T;

  ScoredSample out;
  out.plain = featurize(
      assemble_answer_input(sample.context, std::nullopt, sample.candidate, taxonomy,
                            ctx.encoder),
      model.cfg.feature_dim);

  // Predicted intents: deterministic pass, 0.5 multi-label threshold.
  const auto intent_probs = forward_intents(model, out.plain, ForwardMode::deterministic());
  const std::size_t n_rows = kept_turns(sample.context.size(), model.cfg.max_turns);
  std::vector<IntentAnnotation> predicted(sample.context.size());
  for (auto& ann : predicted) ann.bits.assign(taxonomy.size(), 0);
  const std::size_t start = sample.context.size() - n_rows;

  double log_sum = 0.0;
  std::size_t n_selected = 0;
  double max_prob = 0.0;
  for (std::size_t row = 0; row < n_rows; ++row) {
    for (std::size_t l = 0; l < model.cfg.taxonomy_size && l < taxonomy.size(); ++l) {
      const double p = intent_probs[row * model.cfg.taxonomy_size + l];
      max_prob = std::max(max_prob, p);
      if (p >= 0.5) {
        predicted[start + row].bits[l] = 1;
        log_sum += std::log(p);
        ++n_selected;
      }
    }
  }
  // Geometric mean of the selected label probabilities; falls back to the
  // single best probability when nothing clears 0.5.
  const double p_e = n_selected > 0
                         ? std::exp(log_sum / static_cast<double>(n_selected))
                         : std::max(max_prob, 1e-12);

  out.augmented = featurize(
      assemble_answer_input(sample.context, predicted, sample.candidate, taxonomy,
                            ctx.encoder),
      model.cfg.feature_dim);

  const auto p_t = mc_dropout_sample(model, out.plain, T, mix_seed(seed, 1));
  const auto p_tilde_t = mc_dropout_sample(model, out.augmented, T, mix_seed(seed, 2));

  ConfidenceRecord& rec = out.record;
  rec.p_e = p_e;
  rec.degenerate_p_e = (p_e <= 0.0);
  rec.g = confidence_g(p_t, ctx.full_binary_entropy);
  rec.g_tilde = confidence_g_tilde(p_tilde_t, p_e, ctx.full_binary_entropy);
  rec.delta = intent_confidence_gain(rec.g, rec.g_tilde);
  rec.intents_selected = ctx.force_augment || rec.delta > ctx.thresholds.lambda_gain;

  for (double p : p_t) out.mean_plain += p;
  out.mean_plain /= static_cast<double>(T);
  for (double p : p_tilde_t) out.mean_augmented += p_e * p;
  out.mean_augmented /= static_cast<double>(T);

  if (rec.intents_selected) {
    rec.p_bar = out.mean_augmented;
    rec.g_used = rec.g_tilde;
  } else {
    rec.p_bar = out.mean_plain;
    rec.g_used = rec.g;
  }
  return out;
}

std::vector<std::pair<std::size_t, PseudoLabel>> calibrate_labels(
    const std::vector<ConfidenceRecord>& records, const ThresholdConfig& th) {
  std::vector<PseudoLabel> tentative(records.size(), PseudoLabel::Abstain);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ConfidenceRecord& r = records[i];
    if (r.p_bar < th.lambda_minus || r.p_bar > th.lambda_plus) {
      tentative[i] = pseudo_label_phi(th.lambda_plus, th.lambda_minus, r.p_bar);
    } else if (r.g_used > th.lambda_h) {
      // Mid-band admission gated by confidence.
      tentative[i] = pseudo_label_phi(th.lambda_tilde_plus, th.lambda_tilde_minus, r.p_bar);
    }
  }
  std::size_t n_pos = 0;
  for (auto l : tentative)
    if (l == PseudoLabel::Positive) ++n_pos;
  // No candidate cleared a positive band: the teacher has no anchor in this
  // group, so it contributes nothing. With several would-be positives the
  // positives are suppressed but the negatives are retained.
  std::vector<std::pair<std::size_t, PseudoLabel>> out;
  if (n_pos == 0) return out;
  for (std::size_t i = 0; i < tentative.size(); ++i) {
    if (tentative[i] == PseudoLabel::Abstain) continue;
    if (tentative[i] == PseudoLabel::Positive && n_pos != 1) continue;  // uniqueness
    out.emplace_back(i, tentative[i]);
  }
  return out;
}

std::vector<std::pair<std::size_t, PseudoLabel>> calibrate_labels_basic(
    const std::vector<double>& p_values, const ThresholdConfig& th) {
  std::vector<std::pair<std::size_t, PseudoLabel>> out;
  if (!unique_positive_gate(p_values, th.lambda_plus)) return out;
  for (std::size_t i = 0; i < p_values.size(); ++i) {
    const PseudoLabel l = pseudo_label_phi(th.lambda_plus, th.lambda_minus, p_values[i]);
    if (l != PseudoLabel::Abstain) out.emplace_back(i, l);
  }
  return out;
}

EvalMetrics evaluate_model(const DualHeadModel& model,
                           const std::vector<CandidateGroup>& groups,
                           const std::vector<std::string>& taxonomy,
                           const EncoderConfig& encoder) {
  std::vector<double> preds;
  std::vector<int> labels;
  std::vector<GroupRanking> rankings;
  std::size_t min_size = SIZE_MAX;
  for (const auto& g : groups) {
    std::vector<double> probs;
    probs.reserve(g.samples.size());
    for (const auto& s : g.samples) {
      FeatureVector fv = featurize(
          assemble_answer_input(s.context, std::nullopt, s.candidate, taxonomy, encoder),
          model.cfg.feature_dim);
      const double p = forward_answer(model, fv, ForwardMode::deterministic());
      probs.push_back(p);
      if (s.answer_label) {
        preds.push_back(p);
        labels.push_back(*s.answer_label);
      }
    }
    std::size_t pos = 0;
    bool have_pos = false;
    if (g.positive_index) {
      pos = *g.positive_index;
      have_pos = true;
    } else {
      for (std::size_t i = 0; i < g.samples.size(); ++i)
        if (g.samples[i].answer_label && *g.samples[i].answer_label == 1) {
          pos = i;
          have_pos = true;
          break;
        }
    }
    if (have_pos) {
      rankings.push_back(rank_group(g.group_id, probs, pos));
      min_size = std::min(min_size, g.samples.size());
    }
  }
  EvalMetrics out;
  out.cls = precision_recall_f1(preds, labels);
  if (!rankings.empty()) {
    out.map = mean_average_precision(rankings);
    out.r_at_1 = recall_at_k(rankings, std::min<std::size_t>(1, min_size));
    out.r_at_2 = recall_at_k(rankings, std::min<std::size_t>(2, min_size));
    out.r_at_5 = recall_at_k(rankings, std::min<std::size_t>(5, min_size));
  }
  return out;
}

namespace seeds {
std::uint64_t teacher_init(std::uint64_t seed) { return mix_seed(seed, 0x7e4c); }
std::uint64_t teacher_train(std::uint64_t seed) { return mix_seed(seed, 0x7e4d); }
std::uint64_t student_init(std::uint64_t seed, std::size_t round) {
  return mix_seed(seed, 0x57d0, round);
}
std::uint64_t student_train(std::uint64_t seed, std::size_t round) {
  return mix_seed(seed, 0x57d1, round);
}
std::uint64_t scoring(std::uint64_t seed, std::size_t round, std::int64_t group_id,
                      std::size_t sample_index) {
  return mix_seed(mix_seed(seed, 0x5c02, round),
                  static_cast<std::uint64_t>(group_id), sample_index);
}
}  // namespace seeds

std::size_t resolve_thread_count(std::size_t requested) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ICAST_THREADS")) {
    const long cap = std::atol(env);
    if (cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return std::max<std::size_t>(1, n);
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += n_threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

SelfTrainResult run_self_training(const std::vector<CandidateGroup>& labeled,
                                  const std::vector<CandidateGroup>& unlabeled,
                                  const std::vector<CandidateGroup>& validation,
                                  const std::vector<std::string>& taxonomy,
                                  const SelfTrainConfig& cfg) {
  if (labeled.empty()) throw ContractViolation("run_self_training: D^l must be non-empty");
  cfg.thresholds.validate();
  cfg.model.validate();
  cfg.train.validate();

  const bool use_intents = cfg.mode != AblationMode::NoIg;
  const std::size_t threads = resolve_thread_count(cfg.threads);

  std::vector<TrainExample> labeled_examples;
  for (const auto& g : labeled)
    for (const auto& s : g.samples)
      for (auto& ex : make_labeled_examples(s, taxonomy, cfg.encoder, cfg.model, use_intents))
        labeled_examples.push_back(std::move(ex));

  DualHeadModel teacher = init_model(cfg.model, seeds::teacher_init(cfg.seed));
  {
    TrainConfig tc = cfg.train;
    tc.seed = seeds::teacher_train(cfg.seed);
    if (cfg.teacher_epochs > 0) tc.epochs_per_round = cfg.teacher_epochs;
    train(teacher, labeled_examples, tc);
  }

  SelfTrainResult result;
  {
    RoundRecord r0;
    r0.round = 0;
    if (!validation.empty())
      r0.validation = evaluate_model(teacher, validation, taxonomy, cfg.encoder);
    result.history.push_back(std::move(r0));
  }

  if (unlabeled.empty()) {
    result.model = std::move(teacher);
    return result;
  }

  // Flat sample index for parallel scoring.
  struct Ref {
    std::size_t group;
    std::size_t index;
  };
  std::vector<Ref> refs;
  for (std::size_t gi = 0; gi < unlabeled.size(); ++gi)
    for (std::size_t si = 0; si < unlabeled[gi].samples.size(); ++si)
      refs.push_back({gi, si});

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    RoundRecord rec;
    rec.round = round;

    std::vector<TrainExample> pseudo_examples;
    double delta_sum = 0.0;
    std::size_t delta_count = 0;

    if (cfg.mode == AblationMode::NoIg) {
      // Plain teacher-student: single deterministic pass, outer thresholds.
      for (const auto& g : unlabeled) {
        std::vector<double> probs;
        std::vector<FeatureVector> features;
        for (const auto& s : g.samples) {
          FeatureVector fv = featurize(
              assemble_answer_input(s.context, std::nullopt, s.candidate, taxonomy,
                                    cfg.encoder),
              cfg.model.feature_dim);
          probs.push_back(forward_answer(teacher, fv, ForwardMode::deterministic()));
          features.push_back(std::move(fv));
        }
        for (const auto& [idx, label] : calibrate_labels_basic(probs, cfg.thresholds)) {
          TrainExample ex;
          ex.plain = features[idx];
          ex.answer_label = label == PseudoLabel::Positive ? 1.0 : 0.0;
          pseudo_examples.push_back(std::move(ex));
          rec.pseudo.push_back({g.group_id, idx, label == PseudoLabel::Positive ? 1 : 0,
                                false});
          if (label == PseudoLabel::Positive) ++rec.positives;
          else ++rec.negatives;
        }
      }
    } else {
      ScoringContext ctx;
      ctx.model = &teacher;
      ctx.taxonomy = &taxonomy;
      ctx.encoder = cfg.encoder;
      ctx.thresholds = cfg.thresholds;
      ctx.force_augment = cfg.mode == AblationMode::NoIcge;
      ctx.full_binary_entropy = cfg.full_binary_entropy;

      std::vector<ScoredSample> scored(refs.size());
      parallel_for(refs.size(), threads, [&](std::size_t i) {
        const auto& [gi, si] = refs[i];
        scored[i] = score_unlabeled(
            ctx, unlabeled[gi].samples[si],
            seeds::scoring(cfg.seed, round, unlabeled[gi].group_id, si));
      });

      std::size_t cursor = 0;
      for (const auto& g : unlabeled) {
        std::vector<const ScoredSample*> group_scored;
        std::vector<ConfidenceRecord> records;
        for (std::size_t si = 0; si < g.samples.size(); ++si, ++cursor) {
          group_scored.push_back(&scored[cursor]);
          records.push_back(scored[cursor].record);
          delta_sum += scored[cursor].record.delta;
          ++delta_count;
          if (scored[cursor].record.intents_selected) ++rec.augmented_count;
        }
        std::vector<std::pair<std::size_t, PseudoLabel>> labels;
        if (cfg.mode == AblationMode::NoIcgeNoAlc) {
          std::vector<double> p_bars;
          for (const auto& r : records) p_bars.push_back(r.p_bar);
          labels = calibrate_labels_basic(p_bars, cfg.thresholds);
        } else {
          labels = calibrate_labels(records, cfg.thresholds);
        }
        for (const auto& [idx, label] : labels) {
          const ScoredSample& ss = *group_scored[idx];
          TrainExample ex;
          const bool aug = ss.record.intents_selected;
          ex.plain = ss.plain;
          if (aug) ex.augmented = ss.augmented;
          ex.answer_label = label == PseudoLabel::Positive ? 1.0 : 0.0;
          pseudo_examples.push_back(std::move(ex));
          rec.pseudo.push_back(
              {g.group_id, idx, label == PseudoLabel::Positive ? 1 : 0, aug});
          if (label == PseudoLabel::Positive) ++rec.positives;
          else ++rec.negatives;
        }
      }
    }

    rec.dp_size = pseudo_examples.size();
    rec.mean_delta = delta_count ? delta_sum / static_cast<double>(delta_count) : 0.0;

    // Re-train the student on D^l plus the calibrated pseudo set.
    DualHeadModel student = cfg.warm_start_student
                                ? teacher
                                : init_model(cfg.model, seeds::student_init(cfg.seed, round));
    std::vector<TrainExample> data = labeled_examples;
    data.insert(data.end(), pseudo_examples.begin(), pseudo_examples.end());
    TrainConfig tc = cfg.train;
    tc.seed = seeds::student_train(cfg.seed, round);
    train(student, data, tc);
    teacher = std::move(student);

    if (!validation.empty())
      rec.validation = evaluate_model(teacher, validation, taxonomy, cfg.encoder);
    result.history.push_back(std::move(rec));
  }

  result.model = std::move(teacher);
  return result;
}

}  // namespace icast

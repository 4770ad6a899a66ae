#include "icast/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "icast/rng.hpp"

namespace icast {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds list must be non-empty");
  if (labeled_fraction <= 0.0 || labeled_fraction > 1.0)
    throw ConfigError("labeled_fraction must lie in (0,1]");
  generator.validate();
  selftrain.thresholds.validate();
  selftrain.model.validate();
  selftrain.train.validate();
}

namespace {

void apply_json(ExperimentConfig& cfg, const json& j) {
  for (const auto& [key, value] : j.items()) {
    if (key == "corpus_path") cfg.corpus_path = value.get<std::string>();
    else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
    else if (key == "labeled_fraction") cfg.labeled_fraction = value.get<double>();
    else if (key == "split_seed") cfg.split_seed = value.get<std::uint64_t>();
    else if (key == "seeds") cfg.seeds = value.get<std::vector<std::uint64_t>>();
    else if (key == "n_dialogues") cfg.generator.n_dialogues = value.get<std::size_t>();
    else if (key == "vocabulary_size") cfg.generator.vocabulary_size = value.get<std::size_t>();
    else if (key == "gen_min_turns") cfg.generator.min_turns = value.get<std::size_t>();
    else if (key == "gen_max_turns") cfg.generator.max_turns = value.get<std::size_t>();
    else if (key == "intent_signal_strength")
      cfg.generator.intent_signal_strength = value.get<double>();
    else if (key == "intent_stickiness")
      cfg.generator.intent_stickiness = value.get<double>();
    else if (key == "cue_probability")
      cfg.generator.cue_probability = value.get<double>();
    else if (key == "generator_seed") cfg.generator.seed = value.get<std::uint64_t>();
    else if (key == "negatives_per_group")
      cfg.generator.negatives_per_group = value.get<std::size_t>();
    else if (key == "validation_fraction")
      cfg.generator.validation_fraction = value.get<double>();
    else if (key == "test_fraction") cfg.generator.test_fraction = value.get<double>();
    else if (key == "bm25_k1") cfg.generator.bm25_k1 = value.get<double>();
    else if (key == "bm25_b") cfg.generator.bm25_b = value.get<double>();
    else if (key == "taxonomy")
      cfg.generator.taxonomy = value.get<std::vector<std::string>>();
    else if (key == "intent_transition_matrix")
      cfg.generator.intent_transition_matrix =
          value.get<std::vector<std::vector<double>>>();
    else if (key == "lambda_plus") cfg.selftrain.thresholds.lambda_plus = value.get<double>();
    else if (key == "lambda_minus") cfg.selftrain.thresholds.lambda_minus = value.get<double>();
    else if (key == "lambda_tilde_plus")
      cfg.selftrain.thresholds.lambda_tilde_plus = value.get<double>();
    else if (key == "lambda_tilde_minus")
      cfg.selftrain.thresholds.lambda_tilde_minus = value.get<double>();
    else if (key == "lambda_h") cfg.selftrain.thresholds.lambda_h = value.get<double>();
    else if (key == "lambda_gain") cfg.selftrain.thresholds.lambda_gain = value.get<double>();
    else if (key == "T") cfg.selftrain.thresholds.T = value.get<std::size_t>();
    else if (key == "batch_size") cfg.selftrain.train.batch_size = value.get<std::size_t>();
    else if (key == "learning_rate") cfg.selftrain.train.learning_rate = value.get<double>();
    else if (key == "weight_decay") cfg.selftrain.train.weight_decay = value.get<double>();
    else if (key == "epochs_per_round")
      cfg.selftrain.train.epochs_per_round = value.get<std::size_t>();
    else if (key == "feature_dim") cfg.selftrain.model.feature_dim = value.get<std::size_t>();
    else if (key == "hidden_dim") cfg.selftrain.model.hidden_dim = value.get<std::size_t>();
    else if (key == "dropout_rate") cfg.selftrain.model.dropout_rate = value.get<double>();
    else if (key == "max_context_turns") {
      cfg.selftrain.encoder.max_turns = value.get<std::size_t>();
      cfg.selftrain.model.max_turns = value.get<std::size_t>();
    } else if (key == "max_context_tokens")
      cfg.selftrain.encoder.max_context_tokens = value.get<std::size_t>();
    else if (key == "max_answer_tokens")
      cfg.selftrain.encoder.max_answer_tokens = value.get<std::size_t>();
    else if (key == "mode")
      cfg.selftrain.mode = parse_ablation_mode(value.get<std::string>());
    else if (key == "rounds") cfg.selftrain.rounds = value.get<std::size_t>();
    else if (key == "teacher_epochs")
      cfg.selftrain.teacher_epochs = value.get<std::size_t>();
    else if (key == "warm_start_student")
      cfg.selftrain.warm_start_student = value.get<bool>();
    else if (key == "full_binary_entropy")
      cfg.selftrain.full_binary_entropy = value.get<bool>();
    else if (key == "threads") cfg.selftrain.threads = value.get<std::size_t>();
    else
      throw ConfigError("unknown config key: " + key);
  }
  // Keep derived dimensions consistent.
  cfg.selftrain.encoder.feature_dim = cfg.selftrain.model.feature_dim;
  cfg.selftrain.model.taxonomy_size = cfg.generator.taxonomy.size();
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    apply_json(cfg, j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("--set expects key=value, got: " + key_value);
  const std::string key = key_value.substr(0, eq);
  const std::string raw = key_value.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare strings allowed
  }
  json j;
  j[key] = value;
  try {
    apply_json(cfg, j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad override value: ") + e.what());
  }
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
  json j;
  j["corpus_path"] = cfg.corpus_path;
  j["output_dir"] = cfg.output_dir;
  j["labeled_fraction"] = cfg.labeled_fraction;
  j["split_seed"] = cfg.split_seed;
  j["seeds"] = cfg.seeds;
  j["n_dialogues"] = cfg.generator.n_dialogues;
  j["vocabulary_size"] = cfg.generator.vocabulary_size;
  j["gen_min_turns"] = cfg.generator.min_turns;
  j["gen_max_turns"] = cfg.generator.max_turns;
  j["intent_signal_strength"] = cfg.generator.intent_signal_strength;
  j["intent_stickiness"] = cfg.generator.intent_stickiness;
  j["cue_probability"] = cfg.generator.cue_probability;
  j["generator_seed"] = cfg.generator.seed;
  j["negatives_per_group"] = cfg.generator.negatives_per_group;
  j["validation_fraction"] = cfg.generator.validation_fraction;
  j["test_fraction"] = cfg.generator.test_fraction;
  j["bm25_k1"] = cfg.generator.bm25_k1;
  j["bm25_b"] = cfg.generator.bm25_b;
  j["taxonomy"] = cfg.generator.taxonomy;
  j["intent_transition_matrix"] = cfg.generator.intent_transition_matrix;
  j["lambda_plus"] = cfg.selftrain.thresholds.lambda_plus;
  j["lambda_minus"] = cfg.selftrain.thresholds.lambda_minus;
  j["lambda_tilde_plus"] = cfg.selftrain.thresholds.lambda_tilde_plus;
  j["lambda_tilde_minus"] = cfg.selftrain.thresholds.lambda_tilde_minus;
  j["lambda_h"] = cfg.selftrain.thresholds.lambda_h;
  j["lambda_gain"] = cfg.selftrain.thresholds.lambda_gain;
  j["T"] = cfg.selftrain.thresholds.T;
  j["batch_size"] = cfg.selftrain.train.batch_size;
  j["learning_rate"] = cfg.selftrain.train.learning_rate;
  j["weight_decay"] = cfg.selftrain.train.weight_decay;
  j["epochs_per_round"] = cfg.selftrain.train.epochs_per_round;
  j["feature_dim"] = cfg.selftrain.model.feature_dim;
  j["hidden_dim"] = cfg.selftrain.model.hidden_dim;
  j["dropout_rate"] = cfg.selftrain.model.dropout_rate;
  j["max_context_turns"] = cfg.selftrain.encoder.max_turns;
  j["max_context_tokens"] = cfg.selftrain.encoder.max_context_tokens;
  j["max_answer_tokens"] = cfg.selftrain.encoder.max_answer_tokens;
  j["mode"] = ablation_mode_name(cfg.selftrain.mode);
  j["rounds"] = cfg.selftrain.rounds;
  j["teacher_epochs"] = cfg.selftrain.teacher_epochs;
  j["warm_start_student"] = cfg.selftrain.warm_start_student;
  j["full_binary_entropy"] = cfg.selftrain.full_binary_entropy;
  j["threads"] = cfg.selftrain.threads;
  return j.dump(2);
}

namespace {

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + tmp);
    os << content;
    os.flush();
    if (!os) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path + ": " + ec.message());
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

json metrics_json(const EvalMetrics& m) {
  return {{"P", m.cls.precision}, {"R", m.cls.recall},   {"F1", m.cls.f1},
          {"MAP", m.map},         {"R@1", m.r_at_1},     {"R@2", m.r_at_2},
          {"R@5", m.r_at_5}};
}

void csv_row(std::string& csv, const std::string& seed, const std::string& round,
             const char* mode, const EvalMetrics& m, std::size_t dp,
             std::size_t augmented, double mean_delta) {
  csv += seed + "," + round + "," + mode + "," + fmt6(m.cls.precision) + "," +
         fmt6(m.cls.recall) + "," + fmt6(m.cls.f1) + "," + fmt6(m.map) + "," +
         fmt6(m.r_at_1) + "," + fmt6(m.r_at_2) + "," + fmt6(m.r_at_5) + "," +
         std::to_string(dp) + "," + std::to_string(augmented) + "," +
         fmt6(mean_delta) + "\n";
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SelfTrainConfig resolve_selftrain(const ExperimentConfig& cfg, const Corpus& corpus) {
  SelfTrainConfig st = cfg.selftrain;
  st.model.taxonomy_size = corpus.taxonomy.size();
  st.encoder.feature_dim = st.model.feature_dim;
  return st;
}

}  // namespace

int cmd_gen(const ExperimentConfig& cfg) {
  cfg.validate();
  Corpus corpus = generate_synthetic_corpus(cfg.generator);
  if (cfg.labeled_fraction < 1.0 && !corpus.labeled.empty())
    corpus = split_corpus(corpus, cfg.labeled_fraction, cfg.split_seed);
  save_corpus(corpus, cfg.corpus_path);
  std::printf("partition      groups  samples\n");
  auto row = [](const char* name, const std::vector<CandidateGroup>& g) {
    std::size_t samples = 0;
    for (const auto& grp : g) samples += grp.samples.size();
    std::printf("%-12s %8zu %8zu\n", name, g.size(), samples);
  };
  row("labeled", corpus.labeled);
  row("unlabeled", corpus.unlabeled);
  row("validation", corpus.validation);
  row("test", corpus.test);
  return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.corpus_path);
  SelfTrainConfig base = resolve_selftrain(cfg, corpus);
  const char* mode = ablation_mode_name(base.mode);

  std::filesystem::create_directories(cfg.output_dir);
  std::string csv =
      "seed,round,mode,P,R,F1,MAP,R@1,R@2,R@5,dp_size,augmented_count,mean_delta\n";
  json report;
  report["config"] = json::parse(resolved_config_json(cfg));
  report["seeds"] = json::array();
  std::vector<double> final_f1;

  for (std::uint64_t seed : cfg.seeds) {
    SelfTrainConfig st = base;
    st.seed = seed;
    SelfTrainResult result =
        run_self_training(corpus.labeled, corpus.unlabeled, corpus.validation,
                          corpus.taxonomy, st);
    const EvalMetrics test_metrics =
        evaluate_model(result.model, corpus.test, corpus.taxonomy, st.encoder);
    final_f1.push_back(test_metrics.cls.f1);

    json seed_report;
    seed_report["seed"] = seed;
    seed_report["rounds"] = json::array();
    for (const auto& r : result.history) {
      seed_report["rounds"].push_back({{"round", r.round},
                                       {"dp_size", r.dp_size},
                                       {"positives", r.positives},
                                       {"negatives", r.negatives},
                                       {"augmented_count", r.augmented_count},
                                       {"mean_delta", r.mean_delta},
                                       {"validation", metrics_json(r.validation)}});
      csv_row(csv, std::to_string(seed), std::to_string(r.round), mode, r.validation,
              r.dp_size, r.augmented_count, r.mean_delta);
    }
    seed_report["test"] = metrics_json(test_metrics);
    const RoundRecord& last = result.history.back();
    csv_row(csv, std::to_string(seed), "final", mode, test_metrics, last.dp_size,
            last.augmented_count, last.mean_delta);
    report["seeds"].push_back(std::move(seed_report));

    save_model(result.model,
               cfg.output_dir + "/model_seed" + std::to_string(seed) + ".ckpt");
  }

  std::vector<double> sorted = final_f1;
  std::sort(sorted.begin(), sorted.end());
  report["aggregate"] = {{"test_f1_median", median(final_f1)},
                         {"test_f1_min", sorted.front()},
                         {"test_f1_max", sorted.back()}};

  write_atomic(cfg.output_dir + "/report.json", report.dump(2) + "\n");
  write_atomic(cfg.output_dir + "/report.csv", csv);
  std::printf("mode=%s median test F1 = %s (reports in %s)\n", mode,
              fmt6(median(final_f1)).c_str(), cfg.output_dir.c_str());
  return 0;
}

std::vector<LambdaSweepPoint> sweep_lambda(const Corpus& corpus,
                                           const SelfTrainConfig& cfg,
                                           const std::vector<double>& lambdas) {
  if (lambdas.size() < 2) throw ConfigError("sweep requires at least two lambda values");
  if (corpus.labeled.empty()) throw ContractViolation("sweep: labeled partition empty");

  std::vector<TrainExample> labeled_examples;
  for (const auto& g : corpus.labeled)
    for (const auto& s : g.samples)
      for (auto& ex : make_labeled_examples(s, corpus.taxonomy, cfg.encoder, cfg.model, true))
        labeled_examples.push_back(std::move(ex));

  DualHeadModel teacher = init_model(cfg.model, seeds::teacher_init(cfg.seed));
  {
    TrainConfig tc = cfg.train;
    tc.seed = seeds::teacher_train(cfg.seed);
    train(teacher, labeled_examples, tc);
  }

  // One scoring pass; the MC draws are lambda-independent.
  ScoringContext ctx;
  ctx.model = &teacher;
  ctx.taxonomy = &corpus.taxonomy;
  ctx.encoder = cfg.encoder;
  ctx.thresholds = cfg.thresholds;
  ctx.full_binary_entropy = cfg.full_binary_entropy;

  struct Ref {
    std::size_t group, index;
  };
  std::vector<Ref> refs;
  for (std::size_t gi = 0; gi < corpus.unlabeled.size(); ++gi)
    for (std::size_t si = 0; si < corpus.unlabeled[gi].samples.size(); ++si)
      refs.push_back({gi, si});
  std::vector<ScoredSample> scored(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& [gi, si] = refs[i];
    scored[i] = score_unlabeled(
        ctx, corpus.unlabeled[gi].samples[si],
        seeds::scoring(cfg.seed, 1, corpus.unlabeled[gi].group_id, si));
  }

  std::vector<LambdaSweepPoint> points;
  for (double lambda : lambdas) {
    LambdaSweepPoint pt;
    pt.lambda = lambda;
    std::vector<TrainExample> pseudo;
    std::size_t cursor = 0;
    for (const auto& g : corpus.unlabeled) {
      std::vector<ConfidenceRecord> records;
      std::vector<const ScoredSample*> group_scored;
      for (std::size_t si = 0; si < g.samples.size(); ++si, ++cursor) {
        ScoredSample& ss = scored[cursor];
        ConfidenceRecord rec = ss.record;
        rec.intents_selected = rec.delta > lambda;
        rec.p_bar = rec.intents_selected ? ss.mean_augmented : ss.mean_plain;
        rec.g_used = rec.intents_selected ? rec.g_tilde : rec.g;
        if (rec.intents_selected) ++pt.augmented_count;
        records.push_back(rec);
        group_scored.push_back(&ss);
      }
      for (const auto& [idx, label] : calibrate_labels(records, cfg.thresholds)) {
        TrainExample ex;
        const bool aug = records[idx].intents_selected;
        ex.plain = group_scored[idx]->plain;
        if (aug) ex.augmented = group_scored[idx]->augmented;
        ex.answer_label = label == PseudoLabel::Positive ? 1.0 : 0.0;
        pseudo.push_back(std::move(ex));
      }
    }
    pt.dp_size = pseudo.size();

    DualHeadModel student = init_model(cfg.model, seeds::student_init(cfg.seed, 1));
    std::vector<TrainExample> data = labeled_examples;
    data.insert(data.end(), pseudo.begin(), pseudo.end());
    TrainConfig tc = cfg.train;
    tc.seed = seeds::student_train(cfg.seed, 1);
    train(student, data, tc);
    if (!corpus.validation.empty())
      pt.f1_after_one_round =
          evaluate_model(student, corpus.validation, corpus.taxonomy, cfg.encoder).cls.f1;
    points.push_back(pt);
  }
  return points;
}

int cmd_sweep_lambda(const ExperimentConfig& cfg, const std::vector<double>& lambdas) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.corpus_path);
  SelfTrainConfig st = resolve_selftrain(cfg, corpus);
  st.seed = cfg.seeds.front();
  const auto points = sweep_lambda(corpus, st, lambdas);

  std::filesystem::create_directories(cfg.output_dir);
  json report;
  report["config"] = json::parse(resolved_config_json(cfg));
  report["points"] = json::array();
  std::printf("lambda  augmented  dp_size  F1(1 round)\n");
  for (const auto& pt : points) {
    report["points"].push_back({{"lambda", pt.lambda},
                                {"augmented_count", pt.augmented_count},
                                {"dp_size", pt.dp_size},
                                {"f1_after_one_round", pt.f1_after_one_round}});
    std::printf("%6.3f %10zu %8zu  %s\n", pt.lambda, pt.augmented_count, pt.dp_size,
                fmt6(pt.f1_after_one_round).c_str());
  }
  write_atomic(cfg.output_dir + "/sweep.json", report.dump(2) + "\n");
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& corpus_path,
             const std::string& partition) {
  const DualHeadModel model = load_model(model_path);
  const Corpus corpus = load_corpus(corpus_path);
  const std::vector<CandidateGroup>* groups = nullptr;
  if (partition == "labeled") groups = &corpus.labeled;
  else if (partition == "validation") groups = &corpus.validation;
  else if (partition == "test") groups = &corpus.test;
  else throw ConfigError("unknown partition: " + partition);
  if (groups->empty()) throw ConfigError("partition '" + partition + "' is empty");

  EncoderConfig enc;
  enc.feature_dim = model.cfg.feature_dim;
  enc.max_turns = model.cfg.max_turns;
  const EvalMetrics m = evaluate_model(model, *groups, corpus.taxonomy, enc);
  std::printf("%s\n", metrics_json(m).dump(2).c_str());
  return 0;
}

}  // namespace icast

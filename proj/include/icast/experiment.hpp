#pragma once

#include <string>
#include <vector>

#include "icast/corpus.hpp"
#include "icast/selftrain.hpp"

namespace icast {

struct ExperimentConfig {
  std::string corpus_path = "corpus.jsonl";
  GeneratorConfig generator;
  double labeled_fraction = 0.05;
  std::uint64_t split_seed = 7;
  SelfTrainConfig selftrain;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = ".";

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

// "--set key=value" overrides on the flat config key space.
void apply_override(ExperimentConfig& cfg, const std::string& key_value);

// Fully resolved config (defaults expanded), embedded in every report.
std::string resolved_config_json(const ExperimentConfig& cfg);

int cmd_gen(const ExperimentConfig& cfg);
int cmd_run(const ExperimentConfig& cfg);
int cmd_sweep_lambda(const ExperimentConfig& cfg, const std::vector<double>& lambdas);
int cmd_eval(const std::string& model_path, const std::string& corpus_path,
             const std::string& partition);

// Sweep internals, exposed for the acceptance suite.
struct LambdaSweepPoint {
  double lambda = 0.0;
  std::size_t augmented_count = 0;
  std::size_t dp_size = 0;
  double f1_after_one_round = 0.0;
};
std::vector<LambdaSweepPoint> sweep_lambda(const Corpus& corpus,
                                           const SelfTrainConfig& cfg,
                                           const std::vector<double>& lambdas);

}  // namespace icast

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icast/experiment.hpp"

namespace {

icast::ExperimentConfig make_config(const std::string& config_path,
                                    const std::vector<std::string>& overrides) {
  icast::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = icast::load_experiment_config(config_path);
  for (const auto& kv : overrides) icast::apply_override(cfg, kv);
  return cfg;
}

std::vector<double> parse_lambdas(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw icast::ConfigError("bad lambda value: " + item);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Intent-calibrated self-training lab for answer selection"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string mode, lambdas_csv;
  std::string model_path, corpus_path, partition = "test";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--set", overrides, "key=value config override")->take_all();
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  add_common(gen);

  CLI::App* run = app.add_subcommand("run", "Run the self-training pipeline");
  add_common(run);
  run->add_option("--mode", mode, "full_icast|no_icge|no_icge_no_alc|no_ig");

  CLI::App* sweep = app.add_subcommand("sweep-lambda", "Sweep the intent-gain threshold");
  add_common(sweep);
  sweep->add_option("--lambdas", lambdas_csv, "comma-separated lambda values")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus partition");
  eval->add_option("--model", model_path, "model checkpoint path")->required();
  eval->add_option("--corpus", corpus_path, "corpus file path")->required();
  eval->add_option("--partition", partition, "labeled|validation|test");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return icast::cmd_gen(make_config(config_path, overrides));
    if (run->parsed()) {
      auto cfg = make_config(config_path, overrides);
      if (!mode.empty()) cfg.selftrain.mode = icast::parse_ablation_mode(mode);
      return icast::cmd_run(cfg);
    }
    if (sweep->parsed())
      return icast::cmd_sweep_lambda(make_config(config_path, overrides),
                                     parse_lambdas(lambdas_csv));
    if (eval->parsed()) return icast::cmd_eval(model_path, corpus_path, partition);
  } catch (const icast::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const icast::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const icast::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const icast::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

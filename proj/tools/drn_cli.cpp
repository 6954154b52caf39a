// Command-line front end for the distributional refinement pipeline:
// simulate -> fit -> evaluate -> explain, plus a random hyperparameter
// search. Commands are idempotent for a fixed config and seed.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "drn/errors.hpp"
#include "drn/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitNumerical = 4;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string models;
  std::string seed;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config JSON")
      ->required();
  cmd->add_option("--out", flags.out_dir, "output directory override");
  cmd->add_option("--models", flags.models,
                  "comma-separated model list override");
  cmd->add_option("--seed", flags.seed, "data seed override");
  cmd->add_option("--threads", flags.threads, "worker threads override");
}

drn::ExperimentConfig resolve(const CommonFlags& flags) {
  drn::ExperimentConfig cfg =
      drn::ExperimentConfig::from_json_file(flags.config_path);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.models.empty()) {
    cfg.models.clear();
    std::stringstream ss(flags.models);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) cfg.models.push_back(item);
  }
  if (!flags.seed.empty()) cfg.data_seed = std::stoull(flags.seed);
  if (flags.threads > 0) cfg.threads = flags.threads;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributional refinement network pipeline"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string search_model = "drn";
  int search_budget = 20;

  CLI::App* simulate = app.add_subcommand("simulate", "generate dataset files");
  CLI::App* fit = app.add_subcommand("fit", "fit the configured models");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score fitted models and emit plot data");
  CLI::App* explain =
      app.add_subcommand("explain", "Kernel SHAP attributions for the drn");
  CLI::App* search = app.add_subcommand(
      "random-search", "random hyperparameter search by validation CRPS");
  for (CLI::App* cmd : {simulate, fit, evaluate, explain, search})
    add_common(cmd, flags);
  search->add_option("--model", search_model, "model family to tune");
  search->add_option("--budget", search_budget, "number of trials");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    drn::ExperimentConfig cfg = resolve(flags);
    if (simulate->parsed()) {
      drn::cmd_simulate(cfg);
    } else if (fit->parsed()) {
      drn::cmd_fit(cfg);
    } else if (evaluate->parsed()) {
      drn::cmd_evaluate(cfg);
    } else if (explain->parsed()) {
      drn::cmd_explain(cfg);
    } else if (search->parsed()) {
      drn::SearchTrial best =
          drn::cmd_random_search(cfg, search_model, search_budget);
      std::cout << "best validation CRPS " << best.val_crps << "\n";
    }
  } catch (const drn::DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const drn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const drn::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}

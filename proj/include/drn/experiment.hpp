#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drn/dataset.hpp"
#include "drn/train.hpp"

namespace drn {

// Per-model training knobs on top of the shared TrainingConfig.
struct ModelSettings {
  TrainingConfig config;
  int mixture_components = 10;         // mdn
  double cutpoint_proportion = 0.025;  // drn / ddr grids
  int min_obs = 5;                     // 0 keeps the raw uniform grid
  std::string monitor = "loss";        // "loss" or "crps"
  std::string base_loss = "jbce";      // drn: "jbce" or "nll"
};

struct ExplainSettings {
  std::string target = "mean";  // mean | quantile | adjustment_mean |
                                // adjustment_quantile
  double alpha = 0.9;
  std::vector<int> instances;  // test rows; empty = first 100
  int mc_samples = 100;
  int background_rows = 100;
  std::uint64_t seed = 7;
  bool coalesce_onehot = false;
  int sample_budget = 4096;
};

struct ExperimentConfig {
  // Data source: a generator name or a CSV + recipe pair.
  std::string generator = "synthetic_main";  // synthetic_main | synthetic_reg | csv
  std::string csv_path;
  std::string recipe_path;
  std::uint64_t data_seed = 1;
  int n_train = 12000, n_val = 4000, n_test = 4000;  // synthetic_main
  int reg_n = 40000;                                 // synthetic_reg

  double lower_margin = 0.01, upper_margin = 0.01;

  std::vector<std::string> models = {"glm", "drn"};
  std::map<std::string, ModelSettings> model_settings;

  double ql_alpha = 0.9;
  // Which aggregates appear in the report; subset of crps/nll/rmse/ql.
  std::vector<std::string> metric_list = {"crps", "nll", "rmse", "ql"};
  int density_grid_points = 512;
  int density_instance = 0;  // test row behind the density-grid file

  ExplainSettings explain;

  std::string out_dir = "out";
  int threads = 1;

  ModelSettings settings_for(const std::string& model) const;
  std::string config_hash_hex() const;
  void validate() const;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
};

// Encoded splits plus the content hash binding bundles to their data.
struct LoadedData {
  Dataset train, val, test;
  std::string dataset_hash;
};

// Pipeline commands; they throw ValidationError / DependencyError /
// NumericalError, which the CLI maps to exit codes 2 / 3 / 4.
void cmd_simulate(const ExperimentConfig& config);
void cmd_fit(const ExperimentConfig& config);
void cmd_evaluate(const ExperimentConfig& config);
void cmd_explain(const ExperimentConfig& config);

struct SearchTrial {
  TrainingConfig config;
  double cutpoint_proportion = 0.0;
  int min_obs = 0;
  int mixture_components = 0;
  double val_crps = 0.0;
};

// Seeded random search over the published tuning ranges; returns the best
// trial by validation CRPS and writes a trial log plus the winning settings.
SearchTrial cmd_random_search(const ExperimentConfig& config,
                              const std::string& model, int budget);

// Reads the simulate output back; DependencyError when absent.
LoadedData load_data_dir(const ExperimentConfig& config);

}  // namespace drn

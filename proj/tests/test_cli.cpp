#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drn/errors.hpp"
#include "drn/experiment.hpp"

using namespace drn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "drn_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string small_config_text(const std::string& out_dir) {
  json j;
  j["data"] = {{"generator", "synthetic_main"},
               {"seed", 42},
               {"n_train", 400},
               {"n_val", 150},
               {"n_test", 150}};
  j["models"] = {"glm", "drn"};
  j["train"]["drn"] = {{"learning_rate", 0.005},
                       {"batch_size", 64},
                       {"dropout_rate", 0.1},
                       {"hidden_layers", 1},
                       {"neurons_per_layer", 16},
                       {"patience", 5},
                       {"max_epochs", 12},
                       {"proportion", 0.2},
                       {"min_obs", 3},
                       {"penalties", {{"kl", 0.01}, {"roughness", 0.01}, {"mean", 0.01}}},
                       {"seed", 3}};
  j["explain"] = {{"target", "mean"},
                  {"instances", {0, 1}},
                  {"mc_samples", 20},
                  {"background_rows", 20},
                  {"seed", 5}};
  j["out"] = out_dir;
  return j.dump(2);
}

std::string file_text(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config parsing and validation") {
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{ nope"), ValidationError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"models": ["glm", "mystery"]})"),
      ValidationError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"data": {"generator": "what"}})"),
      ValidationError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"explain": {"target": "magic"}})"),
      ValidationError);

  ExperimentConfig ok = ExperimentConfig::from_json_text(
      R"({"models": ["glm"], "threads": 2, "out": "somewhere"})");
  CHECK(ok.threads == 2);
  CHECK(ok.out_dir == "somewhere");
  CHECK(ok.config_hash_hex().size() == 16);

  // Table-style defaults are wired in for the refinement model.
  ModelSettings s = ok.settings_for("drn");
  CHECK(s.config.learning_rate == doctest::Approx(0.00081));
  CHECK(s.config.batch_size == 256);
  CHECK(s.config.dropout_rate == doctest::Approx(0.140));
  CHECK(s.config.hidden_layers == 3);
  CHECK(s.config.neurons_per_layer == 128);
  CHECK(s.config.penalty_weights.kl == doctest::Approx(0.00047));
  CHECK(s.config.penalty_weights.roughness == doctest::Approx(0.1));
  CHECK(s.config.penalty_weights.mean == doctest::Approx(0.01));
  CHECK(s.cutpoint_proportion == doctest::Approx(0.025));
  CHECK(s.min_obs == 5);
  CHECK(s.config.patience == 30);
}

TEST_CASE("missing upstream artifacts raise dependency errors") {
  fs::path dir = fresh_dir("deps");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));
  CHECK_THROWS_AS(cmd_fit(cfg), DependencyError);
  CHECK_THROWS_AS(cmd_evaluate(cfg), DependencyError);
  CHECK_THROWS_AS(cmd_explain(cfg), DependencyError);

  // drn without a glm (in the list or on disk) is a dependency error too.
  cmd_simulate(cfg);
  ExperimentConfig no_glm = cfg;
  no_glm.models = {"drn"};
  CHECK_THROWS_AS(cmd_fit(no_glm), DependencyError);
}

TEST_CASE("small pipeline end to end") {
  fs::path dir = fresh_dir("pipeline");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));

  cmd_simulate(cfg);
  CHECK(fs::exists(dir / "data/train.csv"));
  CHECK(fs::exists(dir / "data/metadata.json"));

  cmd_fit(cfg);
  CHECK(fs::exists(dir / "models/glm.json"));
  CHECK(fs::exists(dir / "models/drn.json"));
  CHECK(fs::exists(dir / "logs/drn_train.csv"));

  cmd_evaluate(cfg);
  json report = json::parse(file_text(dir / "eval/metrics.json"));
  CHECK(report["test"].contains("glm"));
  CHECK(report["test"].contains("drn"));
  CHECK(report["test"]["drn"]["crps"].is_number());
  CHECK(report.contains("wilcoxon"));
  bool found = false;
  for (const auto& row : report["wilcoxon"]["test"]) {
    if (row["comparison"] == "drn<glm" && row["metric"] == "crps") {
      found = true;
      CHECK(row["p"].is_number());
    }
  }
  CHECK(found);
  CHECK(fs::exists(dir / "eval/calibration_test_drn.csv"));
  CHECK(fs::exists(dir / "eval/qq_test_glm.csv"));
  CHECK(fs::exists(dir / "eval/density_grid.csv"));

  cmd_explain(cfg);
  json shap = json::parse(file_text(dir / "explain/shap.json"));
  REQUIRE(shap["explanations"].size() == 2);
  for (const auto& rec : shap["explanations"])
    CHECK(std::abs(rec["efficiency_gap"].get<double>()) < 1e-9);
  CHECK(fs::exists(dir / "explain/importance.csv"));
  CHECK(fs::exists(dir / "explain/dependence_x1.csv"));
}

TEST_CASE("reruns with the same config produce byte-identical outputs") {
  fs::path dir = fresh_dir("rerun");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));
  auto run_all = [&]() {
    cmd_simulate(cfg);
    cmd_fit(cfg);
    cmd_evaluate(cfg);
  };
  run_all();
  std::string train1 = file_text(dir / "data/train.csv");
  std::string bundle1 = file_text(dir / "models/drn.json");
  std::string metrics1 = file_text(dir / "eval/metrics.json");
  run_all();
  CHECK(file_text(dir / "data/train.csv") == train1);
  CHECK(file_text(dir / "models/drn.json") == bundle1);
  CHECK(file_text(dir / "eval/metrics.json") == metrics1);
}

TEST_CASE("evaluate with a single model yields a single block") {
  fs::path dir = fresh_dir("glm_only");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));
  cfg.models = {"glm"};
  cmd_simulate(cfg);
  cmd_fit(cfg);
  cmd_evaluate(cfg);
  json report = json::parse(file_text(dir / "eval/metrics.json"));
  CHECK(report["test"].size() == 1);
  CHECK(report["test"].contains("glm"));
  CHECK(!report.contains("wilcoxon"));
}

TEST_CASE("dataset hash mismatches are refused") {
  fs::path dir = fresh_dir("hash");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));
  cmd_simulate(cfg);
  cmd_fit(cfg);
  // Regenerate with a different seed: bundles now refer to stale data.
  cfg.data_seed = 777;
  cmd_simulate(cfg);
  CHECK_THROWS_AS(cmd_evaluate(cfg), ValidationError);
}

TEST_CASE("explain rejects out-of-range instances") {
  fs::path dir = fresh_dir("explain_range");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));
  cmd_simulate(cfg);
  cmd_fit(cfg);
  cfg.explain.instances = {0, 100000};
  CHECK_THROWS_AS(cmd_explain(cfg), ValidationError);
}

TEST_CASE("random search returns the best trial and writes a log") {
  fs::path dir = fresh_dir("search");
  ExperimentConfig cfg =
      ExperimentConfig::from_json_text(small_config_text(dir.string()));
  auto s = cfg.settings_for("drn");
  s.config.max_epochs = 3;
  s.config.patience = 2;
  cfg.model_settings["drn"] = s;
  cmd_simulate(cfg);
  SearchTrial best = cmd_random_search(cfg, "drn", 2);
  CHECK(std::isfinite(best.val_crps));
  CHECK(best.val_crps > 0.0);
  CHECK(fs::exists(dir / "search/drn_trials.csv"));
  CHECK(fs::exists(dir / "search/drn_best.json"));
  std::string log = file_text(dir / "search/drn_trials.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);  // header + 2 trials
}

#ifdef DRN_CLI_PATH
TEST_CASE("binary exit codes") {
  fs::path dir = fresh_dir("binary");
  fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path.string()) << small_config_text((dir / "out").string());

  std::string cli = DRN_CLI_PATH;
  auto run = [&](const std::string& args) {
    std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };

  CHECK(run("simulate --config /nonexistent.json") == 2);
  CHECK(run("evaluate --config " + cfg_path.string()) == 3);  // nothing fitted
  CHECK(run("simulate --config " + cfg_path.string()) == 0);
  CHECK(run("fit --config " + cfg_path.string()) == 0);
  CHECK(run("evaluate --config " + cfg_path.string()) == 0);
  CHECK(run("explain --config " + cfg_path.string()) == 0);
}
#endif

}  // TEST_SUITE

#include "drn/serialize.hpp"

#include <fstream>

#include "drn/errors.hpp"

namespace drn {

using nlohmann::json;

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j].get<double>();
  return m;
}

}  // namespace

json glm_to_json(const GammaGlmModel& m) {
  json j;
  j["beta"] = vector_to_json(m.beta);
  j["dispersion"] = m.dispersion;
  j["features"] = m.feature_names;
  j["converged"] = m.converged;
  return j;
}

GammaGlmModel glm_from_json(const json& j) {
  GammaGlmModel m;
  m.beta = vector_from_json(j.at("beta"));
  m.dispersion = j.at("dispersion").get<double>();
  m.feature_names = j.at("features").get<std::vector<std::string>>();
  m.converged = j.value("converged", true);
  if (!(m.dispersion > 0.0))
    throw ValidationError("bundle carries a non-positive dispersion");
  return m;
}

json partition_to_json(const Partition& p) {
  json arr = json::array();
  for (double c : p.cutpoints) arr.push_back(c);
  return arr;
}

Partition partition_from_json(const json& j) {
  Partition p;
  for (const auto& c : j) p.cutpoints.push_back(c.get<double>());
  p.validate();
  return p;
}

json mlp_to_json(const MlpParams& p) {
  json j;
  j["leaky_slope"] = p.leaky_slope;
  j["weights"] = json::array();
  j["biases"] = json::array();
  for (const auto& w : p.weights) j["weights"].push_back(matrix_to_json(w));
  for (const auto& b : p.biases) j["biases"].push_back(vector_to_json(b));
  return j;
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  p.leaky_slope = j.at("leaky_slope").get<double>();
  for (const auto& w : j.at("weights")) p.weights.push_back(matrix_from_json(w));
  for (const auto& b : j.at("biases")) p.biases.push_back(vector_from_json(b));
  p.validate();
  return p;
}

json training_config_to_json(const TrainingConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["dropout_rate"] = c.dropout_rate;
  j["hidden_layers"] = c.hidden_layers;
  j["neurons_per_layer"] = c.neurons_per_layer;
  j["patience"] = c.patience;
  j["max_epochs"] = c.max_epochs;
  j["penalties"] = {{"kl", c.penalty_weights.kl},
                    {"roughness", c.penalty_weights.roughness},
                    {"mean", c.penalty_weights.mean}};
  j["seed"] = c.seed;
  return j;
}

TrainingConfig training_config_from_json(const json& j) {
  TrainingConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.neurons_per_layer = j.value("neurons_per_layer", c.neurons_per_layer);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  if (j.contains("penalties")) {
    const auto& p = j["penalties"];
    c.penalty_weights.kl = p.value("kl", 0.0);
    c.penalty_weights.roughness = p.value("roughness", 0.0);
    c.penalty_weights.mean = p.value("mean", 0.0);
  }
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

void save_bundle(const std::string& path, const BundleHeader& header,
                 const json& model) {
  json j;
  j["type"] = header.type;
  j["dataset_hash"] = header.dataset_hash;
  j["config_hash"] = header.config_hash;
  j["seed"] = header.seed;
  j["model"] = model;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write bundle: " + path);
  out << j.dump(2) << "\n";
}

json load_bundle(const std::string& path, BundleHeader& header) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing model bundle: " + path +
                                 " (run `drn fit` first)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("bundle " + path + ": " + e.what());
  }
  header.type = j.at("type").get<std::string>();
  header.dataset_hash = j.at("dataset_hash").get<std::string>();
  header.config_hash = j.at("config_hash").get<std::string>();
  header.seed = j.at("seed").get<std::uint64_t>();
  return j.at("model");
}

json drn_model_to_json(const DrnModel& m) {
  json j;
  j["baseline"] = glm_to_json(m.baseline);
  j["partition"] = partition_to_json(m.partition);
  j["net"] = mlp_to_json(m.net);
  j["config_hash"] = m.config_hash;
  return j;
}

DrnModel drn_model_from_json(const json& j) {
  DrnModel m;
  m.baseline = glm_from_json(j.at("baseline"));
  m.partition = partition_from_json(j.at("partition"));
  m.net = mlp_from_json(j.at("net"));
  m.config_hash = j.value("config_hash", 0ull);
  return m;
}

json cann_model_to_json(const CannModel& m) {
  json j;
  j["glm"] = glm_to_json(m.glm);
  j["net"] = mlp_to_json(m.net);
  j["dispersion"] = m.dispersion;
  j["config_hash"] = m.config_hash;
  return j;
}

CannModel cann_model_from_json(const json& j) {
  CannModel m;
  m.glm = glm_from_json(j.at("glm"));
  m.net = mlp_from_json(j.at("net"));
  m.dispersion = j.at("dispersion").get<double>();
  m.config_hash = j.value("config_hash", 0ull);
  return m;
}

json mdn_model_to_json(const MdnModel& m) {
  json j;
  j["net"] = mlp_to_json(m.net);
  j["components"] = m.components;
  j["transform"] =
      m.transform == MdnModel::Transform::Exp ? "exp" : "softplus";
  j["config_hash"] = m.config_hash;
  return j;
}

MdnModel mdn_model_from_json(const json& j) {
  MdnModel m;
  m.net = mlp_from_json(j.at("net"));
  m.components = j.at("components").get<int>();
  std::string t = j.value("transform", "exp");
  m.transform = t == "softplus" ? MdnModel::Transform::Softplus
                                : MdnModel::Transform::Exp;
  m.config_hash = j.value("config_hash", 0ull);
  return m;
}

json ddr_model_to_json(const DdrModel& m) {
  json j;
  j["net"] = mlp_to_json(m.net);
  j["partition"] = partition_to_json(m.partition);
  j["config_hash"] = m.config_hash;
  return j;
}

DdrModel ddr_model_from_json(const json& j) {
  DdrModel m;
  m.net = mlp_from_json(j.at("net"));
  m.partition = partition_from_json(j.at("partition"));
  m.config_hash = j.value("config_hash", 0ull);
  return m;
}

}  // namespace drn

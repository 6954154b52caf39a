#pragma once

#include <json.hpp>
#include <string>

#include "drn/baselines.hpp"
#include "drn/drn.hpp"
#include "drn/glm.hpp"
#include "drn/mlp.hpp"
#include "drn/partition.hpp"
#include "drn/train.hpp"

namespace drn {

nlohmann::json glm_to_json(const GammaGlmModel& m);
GammaGlmModel glm_from_json(const nlohmann::json& j);

nlohmann::json partition_to_json(const Partition& p);
Partition partition_from_json(const nlohmann::json& j);

nlohmann::json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

nlohmann::json training_config_to_json(const TrainingConfig& c);
TrainingConfig training_config_from_json(const nlohmann::json& j);

// Model bundle file: {"type", "dataset_hash", "config_hash", "seed", "model"}.
struct BundleHeader {
  std::string type;
  std::string dataset_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
};

void save_bundle(const std::string& path, const BundleHeader& header,
                 const nlohmann::json& model);
nlohmann::json load_bundle(const std::string& path, BundleHeader& header);

nlohmann::json drn_model_to_json(const DrnModel& m);
DrnModel drn_model_from_json(const nlohmann::json& j);

nlohmann::json cann_model_to_json(const CannModel& m);
CannModel cann_model_from_json(const nlohmann::json& j);

nlohmann::json mdn_model_to_json(const MdnModel& m);
MdnModel mdn_model_from_json(const nlohmann::json& j);

nlohmann::json ddr_model_to_json(const DdrModel& m);
DdrModel ddr_model_from_json(const nlohmann::json& j);

}  // namespace drn

#pragma once

// JSON conversion of configuration structs, shared by config and checkpoint
// code. Not installed.

#include "json.hpp"
#include "mip/config.hpp"

namespace mip::detail {

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

}  // namespace mip::detail

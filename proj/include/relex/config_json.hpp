#pragma once

#include <json.hpp>

#include "relex/model.hpp"

namespace relex::model {

nlohmann::json model_config_to_json(const ModelConfig& cfg);

// Starts from defaults and applies the given keys. Unknown keys are a
// ConfigError, so typos never silently fall back to a default.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace relex::model
